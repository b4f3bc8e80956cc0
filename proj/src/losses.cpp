#include "jmod2/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace jmod2 {
namespace {

void require_positive(const DepthMap& d, const char* what) {
  for (double v : d.values) {
    if (!(v > 0.0)) throw std::domain_error(std::string(what) + " depth must be strictly positive");
  }
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_coord < 0 || lambda_obj < 0 || lambda_noobj < 0 || lambda_mean < 0 || lambda_var < 0 ||
      depth_grad_weight < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

void LossBreakdown::update_total(const LossWeights& w) {
  total = depth_scale_inv + w.depth_grad_weight * depth_grad_normal + w.lambda_coord * (det_coord + det_size) +
          w.lambda_obj * det_conf_obj + w.lambda_noobj * det_conf_noobj + w.lambda_mean * det_mean +
          w.lambda_var * det_var;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  depth_scale_inv += o.depth_scale_inv;
  depth_grad_normal += o.depth_grad_normal;
  det_coord += o.det_coord;
  det_size += o.det_size;
  det_conf_obj += o.det_conf_obj;
  det_conf_noobj += o.det_conf_noobj;
  det_mean += o.det_mean;
  det_var += o.det_var;
  total += o.total;
  return *this;
}

LossBreakdown& LossBreakdown::operator*=(double s) {
  depth_scale_inv *= s;
  depth_grad_normal *= s;
  det_coord *= s;
  det_size *= s;
  det_conf_obj *= s;
  det_conf_noobj *= s;
  det_mean *= s;
  det_var *= s;
  total *= s;
  return *this;
}

double scale_invariant_loss_term(const DepthMap& pred, const DepthMap& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("prediction and ground truth are not aligned");
  require_positive(pred, "predicted");
  require_positive(gt, "ground-truth");
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = std::log(pred.values[i]) - std::log(gt.values[i]);
    sum += d;
    sum_sq += d * d;
  }
  return sum_sq / n - sum * sum / (2.0 * n * n);
}

LossBreakdown depth_loss(const DepthMap& pred, const DepthMap& gt, const NormalMap& gt_normals,
                         const CameraModel& camera, const LossWeights& w, DepthMap* grad) {
  if (!pred.same_shape(gt) || !pred.same_shape(gt_normals)) throw ShapeError("depth loss inputs are not aligned");
  if (pred.width != camera.width || pred.height != camera.height) throw ShapeError("depth map does not match the camera");
  if (pred.width < 2 || pred.height < 2) throw ShapeError("depth loss needs at least 2x2 pixels");
  require_positive(pred, "predicted");
  require_positive(gt, "ground-truth");

  const int width = pred.width;
  const int height = pred.height;
  const double n = static_cast<double>(pred.size());
  if (grad != nullptr) *grad = DepthMap(width, height, 0.0);

  // Scale-invariant log term.
  std::vector<double> d(pred.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    d[i] = std::log(pred.values[i]) - std::log(gt.values[i]);
    sum += d[i];
    sum_sq += d[i] * d[i];
  }
  LossBreakdown out;
  out.depth_scale_inv = sum_sq / n - sum * sum / (2.0 * n * n);
  if (grad != nullptr) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      grad->values[i] += (2.0 * d[i] / n - sum / (n * n)) / pred.values[i];
    }
  }

  // Tangent/normal term. With P(x, y) = D(x, y) * ray(x, y), the tangents are
  // t_x = P(bx+1, by) - P(bx, by) and t_y = P(bx, by+1) - P(bx, by) at the
  // stencil base (bx, by), so <t, N> is linear in the three depths involved.
  double normal_term = 0.0;
  for (int y = 0; y < height; ++y) {
    const int by = stencil_base(y, height);
    for (int x = 0; x < width; ++x) {
      const int bx = stencil_base(x, width);
      const Vec3& normal = gt_normals.at(x, y);
      const double k0 = dot(camera.ray(bx, by), normal);
      const double kx = dot(camera.ray(bx + 1, by), normal);
      const double ky = dot(camera.ray(bx, by + 1), normal);
      const double d0 = pred.at(bx, by);
      const double ex = pred.at(bx + 1, by) * kx - d0 * k0;
      const double ey = pred.at(bx, by + 1) * ky - d0 * k0;
      if (w.normal_term == NormalTermMode::squared) {
        normal_term += ex * ex + ey * ey;
        if (grad != nullptr) {
          const double s = w.depth_grad_weight * 2.0 / n;
          grad->at(bx + 1, by) += s * ex * kx;
          grad->at(bx, by + 1) += s * ey * ky;
          grad->at(bx, by) -= s * (ex + ey) * k0;
        }
      } else {
        normal_term += ex + ey;
        if (grad != nullptr) {
          const double s = w.depth_grad_weight / n;
          grad->at(bx + 1, by) += s * kx;
          grad->at(bx, by + 1) += s * ky;
          grad->at(bx, by) -= s * 2.0 * k0;
        }
      }
    }
  }
  out.depth_grad_normal = normal_term / n;
  out.update_total(w);
  return out;
}

LossBreakdown detection_loss(const DetectionGrid& pred, const DetectionGrid& target, const LossWeights& w,
                             DetectionGrid* grad) {
  if (!pred.same_shape(target)) throw ShapeError("detection grids differ in shape");
  const int cells = pred.cells();
  const double n = static_cast<double>(cells);
  if (grad != nullptr) {
    *grad = pred;
    std::fill(grad->values.begin(), grad->values.end(), 0.0);
  }
  LossBreakdown out;
  for (int i = 0; i < cells; ++i) {
    auto diff = [&](int ch) { return pred.cell(i, ch) - target.cell(i, ch); };
    auto add_grad = [&](int ch, double weight) {
      if (grad != nullptr) grad->cell(i, ch) += weight * 2.0 * diff(ch) / n;
    };
    const double dc = diff(kConfidence);
    if (target.cell(i, kConfidence) >= 0.5) {
      out.det_coord += diff(kCenterX) * diff(kCenterX) + diff(kCenterY) * diff(kCenterY);
      out.det_size += diff(kWidth) * diff(kWidth) + diff(kHeight) * diff(kHeight);
      out.det_conf_obj += dc * dc;
      out.det_mean += diff(kMean) * diff(kMean);
      out.det_var += diff(kVar) * diff(kVar);
      add_grad(kCenterX, w.lambda_coord);
      add_grad(kCenterY, w.lambda_coord);
      add_grad(kWidth, w.lambda_coord);
      add_grad(kHeight, w.lambda_coord);
      add_grad(kConfidence, w.lambda_obj);
      add_grad(kMean, w.lambda_mean);
      add_grad(kVar, w.lambda_var);
    } else {
      out.det_conf_noobj += dc * dc;
      add_grad(kConfidence, w.lambda_noobj);
    }
  }
  out.det_coord /= n;
  out.det_size /= n;
  out.det_conf_obj /= n;
  out.det_conf_noobj /= n;
  out.det_mean /= n;
  out.det_var /= n;
  out.update_total(w);
  return out;
}

LossBreakdown total_loss(const ModelOutput& outputs, const TrainingTargets& targets, const LossWeights& w,
                         LossGradients* grads) {
  LossBreakdown out = depth_loss(outputs.depth, targets.depth, targets.normals, targets.camera, w,
                                 grads != nullptr ? &grads->depth : nullptr);
  out += detection_loss(outputs.detections, targets.detections, w,
                        grads != nullptr ? &grads->detections : nullptr);
  out.update_total(w);
  return out;
}

}  // namespace jmod2
