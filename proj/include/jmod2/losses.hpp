#pragma once

#include "jmod2/groundtruth.hpp"
#include "jmod2/model.hpp"
#include "jmod2/synthdata.hpp"
#include "jmod2/tensor.hpp"

namespace jmod2 {

// How the tangent/normal term of the depth loss is formed.
//  squared: mean over pixels of <t_x, N>^2 + <t_y, N>^2 (bounded below by 0)
//  signed:  mean over pixels of <t_x + t_y, N> (the literal printed form;
//           linear in the prediction, kept for comparison only)
enum class NormalTermMode { squared, signed_literal };

struct LossWeights {
  double lambda_coord = 0.25;
  double lambda_obj = 5.0;
  double lambda_noobj = 0.05;
  double lambda_mean = 1.5;
  double lambda_var = 1.25;
  double depth_grad_weight = 1.0;
  NormalTermMode normal_term = NormalTermMode::squared;

  void validate() const;
};

// Unweighted loss components (detection terms already divided by the cell
// count) and their weighted total.
struct LossBreakdown {
  double depth_scale_inv = 0.0;
  double depth_grad_normal = 0.0;
  double det_coord = 0.0;
  double det_size = 0.0;
  double det_conf_obj = 0.0;
  double det_conf_noobj = 0.0;
  double det_mean = 0.0;
  double det_var = 0.0;
  double total = 0.0;

  // Recomputes total from the components.
  void update_total(const LossWeights& w);
  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown& operator*=(double s);
};

// (1/n) sum d^2 - (1/(2 n^2)) (sum d)^2 with d = log pred - log gt.
double scale_invariant_loss_term(const DepthMap& pred, const DepthMap& gt);

// Depth objective. Fills `grad` with dL/d(pred) when non-null. Throws
// std::domain_error on non-positive depth.
LossBreakdown depth_loss(const DepthMap& pred, const DepthMap& gt, const NormalMap& gt_normals,
                         const CameraModel& camera, const LossWeights& w, DepthMap* grad = nullptr);

// Detection objective. Coordinate, size, mean and variance terms only count on
// cells whose target confidence is 1.
LossBreakdown detection_loss(const DetectionGrid& pred, const DetectionGrid& target, const LossWeights& w,
                             DetectionGrid* grad = nullptr);

struct TrainingTargets {
  DepthMap depth;
  NormalMap normals;
  CameraModel camera;
  DetectionGrid detections;
};

struct LossGradients {
  DepthMap depth;
  DetectionGrid detections;
};

LossBreakdown total_loss(const ModelOutput& outputs, const TrainingTargets& targets, const LossWeights& w,
                         LossGradients* grads = nullptr);

}  // namespace jmod2
