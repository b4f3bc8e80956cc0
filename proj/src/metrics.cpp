#include "jmod2/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace jmod2 {
namespace {

struct PixelStats {
  double mean = 0.0;
  double var = 0.0;
};

PixelStats stats_over(const DepthMap& depth, const std::vector<std::size_t>& pixels) {
  PixelStats s;
  if (pixels.empty()) return s;
  for (std::size_t i : pixels) s.mean += depth.values[i];
  s.mean /= static_cast<double>(pixels.size());
  for (std::size_t i : pixels) s.var += (depth.values[i] - s.mean) * (depth.values[i] - s.mean);
  s.var /= static_cast<double>(pixels.size());
  return s;
}

std::vector<std::size_t> obstacle_pixels(const ObstacleBox& box, const Mask& seg) {
  if (!box.pixels.empty()) return box.pixels;
  std::vector<std::size_t> pixels;
  const PixelRect r = pixel_rect(box, seg.width, seg.height);
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      if (seg.at(x, y) != 0) pixels.push_back(static_cast<std::size_t>(y) * seg.width + x);
    }
  }
  return pixels;
}

struct SquaredErrors {
  double mean_sq = 0.0;
  double var_sq = 0.0;
  int count = 0;
};

SquaredErrors obstacle_errors(std::span<const ObstacleBox> gt_boxes, const DepthMap& pred, const Mask& seg) {
  SquaredErrors e;
  for (const ObstacleBox& box : gt_boxes) {
    const auto pixels = obstacle_pixels(box, seg);
    if (pixels.empty()) continue;
    const PixelStats s = stats_over(pred, pixels);
    e.mean_sq += (s.mean - box.mean_depth) * (s.mean - box.mean_depth);
    e.var_sq += (s.var - box.var_depth) * (s.var - box.var_depth);
    ++e.count;
  }
  return e;
}

SquaredErrors matched_errors(const Matching& matching, std::span<const Detection> dets,
                             std::span<const ObstacleBox> gts) {
  SquaredErrors e;
  for (const MatchPair& p : matching.pairs) {
    const ObstacleBox& d = dets[p.det].box;
    const ObstacleBox& g = gts[p.gt];
    e.mean_sq += (d.mean_depth - g.mean_depth) * (d.mean_depth - g.mean_depth);
    e.var_sq += (d.var_depth - g.var_depth) * (d.var_depth - g.var_depth);
    ++e.count;
  }
  return e;
}

StatsError to_rmse(const SquaredErrors& e) {
  if (e.count == 0) return {};
  return {std::sqrt(e.mean_sq / e.count), std::sqrt(e.var_sq / e.count)};
}

void require_aligned_positive(const DepthMap& pred, const DepthMap& gt) {
  if (!pred.same_shape(gt) || pred.size() == 0) throw ShapeError("prediction and ground truth are not aligned");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(pred.values[i] > 0.0) || !(gt.values[i] > 0.0)) throw std::domain_error("depth must be strictly positive");
  }
}

}  // namespace

double rmse_linear(const DepthMap& pred, const DepthMap& gt) {
  if (!pred.same_shape(gt) || pred.size() == 0) throw ShapeError("prediction and ground truth are not aligned");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred.values[i] - gt.values[i]) * (pred.values[i] - gt.values[i]);
  return std::sqrt(sq / static_cast<double>(pred.size()));
}

double sc_inv_rmse(const DepthMap& pred, const DepthMap& gt) {
  require_aligned_positive(pred, gt);
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = std::log(pred.values[i]) - std::log(gt.values[i]);
    sum += d;
    sum_sq += d * d;
  }
  return std::max(0.0, sum_sq / n - sum * sum / (n * n));
}

StatsError obstacle_depth_stats_error(std::span<const ObstacleBox> gt_boxes, const DepthMap& pred, const Mask& seg) {
  if (!pred.same_shape(seg)) throw ShapeError("prediction and segmentation are not aligned");
  return to_rmse(obstacle_errors(gt_boxes, pred, seg));
}

double iou(const ObstacleBox& a, const ObstacleBox& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = std::max(0.0, a.width()) * std::max(0.0, a.height()) +
                     std::max(0.0, b.width()) * std::max(0.0, b.height()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Matching match_detections(std::span<const Detection> dets, std::span<const ObstacleBox> gts, double iou_threshold) {
  struct Candidate {
    double iou;
    double distance;
    int det;
    int gt;
  };
  std::vector<Candidate> candidates;
  for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      const double v = iou(dets[d].box, gts[g]);
      if (v < iou_threshold || v <= 0.0) continue;
      const double dx = dets[d].box.center_x() - gts[g].center_x();
      const double dy = dets[d].box.center_y() - gts[g].center_y();
      candidates.push_back({v, std::hypot(dx, dy), d, g});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
    return std::make_tuple(-a.iou, a.distance, dets[a.det].row, dets[a.det].col, a.det, a.gt) <
           std::make_tuple(-b.iou, b.distance, dets[b.det].row, dets[b.det].col, b.det, b.gt);
  });
  Matching m;
  m.n_det = static_cast<int>(dets.size());
  m.n_gt = static_cast<int>(gts.size());
  std::vector<bool> det_used(dets.size(), false);
  std::vector<bool> gt_used(gts.size(), false);
  for (const Candidate& c : candidates) {
    if (det_used[c.det] || gt_used[c.gt]) continue;
    det_used[c.det] = gt_used[c.gt] = true;
    m.pairs.push_back({c.det, c.gt, c.iou});
  }
  return m;
}

StatsError detection_stats_error(const Matching& matching, std::span<const Detection> dets,
                                 std::span<const ObstacleBox> gts) {
  return to_rmse(matched_errors(matching, dets, gts));
}

void MetricsAccumulator::add(const EvalSample& s) {
  require_aligned_positive(s.pred, s.gt);
  for (std::size_t i = 0; i < s.pred.size(); ++i) {
    pixel_sq_error_ += (s.pred.values[i] - s.gt.values[i]) * (s.pred.values[i] - s.gt.values[i]);
  }
  pixel_count_ += static_cast<double>(s.pred.size());
  sc_inv_sum_ += sc_inv_rmse(s.pred, s.gt);
  ++images_;

  const SquaredErrors obs = obstacle_errors(s.gt_boxes, s.pred, s.seg);
  obs_mean_sq_ += obs.mean_sq;
  obs_var_sq_ += obs.var_sq;
  obs_count_ += obs.count;

  const Matching matching = match_detections(s.detections, s.gt_boxes, iou_threshold_);
  const SquaredErrors det = matched_errors(matching, s.detections, s.gt_boxes);
  det_mean_sq_ += det.mean_sq;
  det_var_sq_ += det.var_sq;
  for (const MatchPair& p : matching.pairs) iou_sum_ += p.iou;
  n_matched_ += static_cast<int>(matching.pairs.size());
  n_det_ += matching.n_det;
  n_gt_ += matching.n_gt;
}

void MetricsAccumulator::merge(const MetricsAccumulator& o) {
  pixel_sq_error_ += o.pixel_sq_error_;
  pixel_count_ += o.pixel_count_;
  sc_inv_sum_ += o.sc_inv_sum_;
  images_ += o.images_;
  obs_mean_sq_ += o.obs_mean_sq_;
  obs_var_sq_ += o.obs_var_sq_;
  obs_count_ += o.obs_count_;
  det_mean_sq_ += o.det_mean_sq_;
  det_var_sq_ += o.det_var_sq_;
  iou_sum_ += o.iou_sum_;
  n_gt_ += o.n_gt_;
  n_det_ += o.n_det_;
  n_matched_ += o.n_matched_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.rmse_linear = pixel_count_ > 0 ? std::sqrt(pixel_sq_error_ / pixel_count_) : 0.0;
  r.sc_inv_rmse = images_ > 0 ? sc_inv_sum_ / images_ : 0.0;
  const StatsError obs = to_rmse({obs_mean_sq_, obs_var_sq_, obs_count_});
  r.depth_obs_rmse_mean = obs.rmse_mean;
  r.depth_obs_rmse_var = obs.rmse_var;
  const StatsError det = to_rmse({det_mean_sq_, det_var_sq_, n_matched_});
  r.det_obs_rmse_mean = det.rmse_mean;
  r.det_obs_rmse_var = det.rmse_var;
  if (n_matched_ > 0) r.iou_mean = iou_sum_ / n_matched_;
  r.n_gt = n_gt_;
  r.n_det = n_det_;
  r.n_matched = n_matched_;
  r.precision = n_det_ > 0 ? static_cast<double>(n_matched_) / n_det_ : 1.0;
  r.recall = n_gt_ > 0 ? static_cast<double>(n_matched_) / n_gt_ : 1.0;
  return r;
}

MetricsReport evaluate(std::span<const EvalSample> samples, double iou_threshold) {
  // Per-sample partials merged in order keep the result independent of the
  // thread count.
  std::vector<MetricsAccumulator> partial(samples.size(), MetricsAccumulator(iou_threshold));
  std::exception_ptr failure;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      partial[i].add(samples[i]);
    } catch (...) {
#pragma omp critical(jmod2_metrics_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  MetricsAccumulator total(iou_threshold);
  for (const MetricsAccumulator& p : partial) total.merge(p);
  return total.report();
}

}  // namespace jmod2
