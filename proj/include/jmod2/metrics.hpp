#pragma once

#include <optional>
#include <span>
#include <vector>

#include "jmod2/groundtruth.hpp"
#include "jmod2/inference.hpp"
#include "jmod2/tensor.hpp"

namespace jmod2 {

// Obstacle-level metrics are std::nullopt when there is nothing to measure
// (no ground-truth obstacles, or no matched detections).
struct MetricsReport {
  double rmse_linear = 0.0;
  double sc_inv_rmse = 0.0;
  std::optional<double> depth_obs_rmse_mean;
  std::optional<double> depth_obs_rmse_var;
  std::optional<double> det_obs_rmse_mean;
  std::optional<double> det_obs_rmse_var;
  std::optional<double> iou_mean;
  double precision = 1.0;
  double recall = 1.0;
  int n_gt = 0;
  int n_det = 0;
  int n_matched = 0;
};

double rmse_linear(const DepthMap& pred, const DepthMap& gt);

// (1/n) sum d^2 - (1/n^2) (sum d)^2, d = log pred - log gt: the variance of the
// log-depth error, invariant to a global scale on pred.
double sc_inv_rmse(const DepthMap& pred, const DepthMap& gt);

struct StatsError {
  std::optional<double> rmse_mean;
  std::optional<double> rmse_var;
};

// Predicted mean/variance over each obstacle's own component pixels, compared
// with the ground-truth statistics. Boxes without a pixel list fall back to the
// seg pixels inside the rectangle.
StatsError obstacle_depth_stats_error(std::span<const ObstacleBox> gt_boxes, const DepthMap& pred, const Mask& seg);

double iou(const ObstacleBox& a, const ObstacleBox& b);

struct MatchPair {
  int det = 0;
  int gt = 0;
  double iou = 0.0;
};

struct Matching {
  std::vector<MatchPair> pairs;
  int n_det = 0;
  int n_gt = 0;
};

// Greedy one-to-one matching by descending IOU; pairs need IOU >= threshold.
// Ties go to the smaller centre distance, then the lower detection cell index.
Matching match_detections(std::span<const Detection> dets, std::span<const ObstacleBox> gts,
                          double iou_threshold = 0.5);

// RMSE over matched pairs of the detector's (m, v) against the ground truth.
StatsError detection_stats_error(const Matching& matching, std::span<const Detection> dets,
                                 std::span<const ObstacleBox> gts);

struct EvalSample {
  DepthMap pred;
  DepthMap gt;
  Mask seg;
  std::vector<ObstacleBox> gt_boxes;
  std::vector<Detection> detections;
};

// Dataset-level reduction. Obstacles, detections and pixels are pooled
// (micro-averaged); sc_inv_rmse is the mean of the per-image values.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(double iou_threshold = 0.5) : iou_threshold_(iou_threshold) {}

  void add(const EvalSample& sample);
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;

 private:
  double iou_threshold_;
  double pixel_sq_error_ = 0.0;
  double pixel_count_ = 0.0;
  double sc_inv_sum_ = 0.0;
  int images_ = 0;
  double obs_mean_sq_ = 0.0;
  double obs_var_sq_ = 0.0;
  int obs_count_ = 0;
  double det_mean_sq_ = 0.0;
  double det_var_sq_ = 0.0;
  double iou_sum_ = 0.0;
  int n_gt_ = 0;
  int n_det_ = 0;
  int n_matched_ = 0;
};

MetricsReport evaluate(std::span<const EvalSample> samples, double iou_threshold = 0.5);

}  // namespace jmod2
