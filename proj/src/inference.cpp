#include "jmod2/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jmod2 {

std::vector<Detection> decode_detections(const DetectionGrid& grid, const GridSpec& spec, double threshold,
                                         const TargetScales& scales) {
  if (grid.cells_x != spec.cells_x || grid.cells_y != spec.cells_y) throw ShapeError("grid does not match the spec");
  const double img_w = spec.image_width();
  const double img_h = spec.image_height();
  std::vector<Detection> out;
  for (int row = 0; row < spec.cells_y; ++row) {
    for (int col = 0; col < spec.cells_x; ++col) {
      const double conf = grid.at(row, col, kConfidence);
      if (!(conf >= threshold)) continue;
      const double cx = (col + grid.at(row, col, kCenterX)) * spec.cell_px;
      const double cy = (row + grid.at(row, col, kCenterY)) * spec.cell_px;
      const double w = grid.at(row, col, kWidth) * img_w;
      const double h = grid.at(row, col, kHeight) * img_h;
      Detection det;
      det.confidence = conf;
      det.row = row;
      det.col = col;
      det.box.x_min = std::clamp(cx - w / 2.0, 0.0, img_w);
      det.box.x_max = std::clamp(cx + w / 2.0, 0.0, img_w);
      det.box.y_min = std::clamp(cy - h / 2.0, 0.0, img_h);
      det.box.y_max = std::clamp(cy + h / 2.0, 0.0, img_h);
      det.box.mean_depth = grid.at(row, col, kMean) * scales.mean_scale;
      det.box.var_depth = grid.at(row, col, kVar) * scales.var_scale;
      out.push_back(std::move(det));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  return out;
}

PixelRect pixel_rect(const ObstacleBox& box, int width, int height) {
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::ceil(box.x_min - 0.5)), 0, width);
  r.x1 = std::clamp(static_cast<int>(std::ceil(box.x_max - 0.5)), 0, width);
  r.y0 = std::clamp(static_cast<int>(std::ceil(box.y_min - 0.5)), 0, height);
  r.y1 = std::clamp(static_cast<int>(std::ceil(box.y_max - 0.5)), 0, height);
  if (r.x1 <= r.x0) {
    r.x0 = std::clamp(static_cast<int>(std::floor(box.center_x())), 0, width - 1);
    r.x1 = r.x0 + 1;
  }
  if (r.y1 <= r.y0) {
    r.y0 = std::clamp(static_cast<int>(std::floor(box.center_y())), 0, height - 1);
    r.y1 = r.y0 + 1;
  }
  return r;
}

double box_mean_depth(const DepthMap& depth, const ObstacleBox& box) {
  const PixelRect r = pixel_rect(box, depth.width, depth.height);
  double sum = 0.0;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) sum += depth.at(x, y);
  }
  return sum / (static_cast<double>(r.x1 - r.x0) * (r.y1 - r.y0));
}

CorrectionResult correction_factor(std::span<const Detection> detections, const DepthMap& depth) {
  for (double v : depth.values) {
    if (!(v > 0.0)) throw std::domain_error("depth must be strictly positive");
  }
  CorrectionResult result;
  result.corrected = depth;
  if (detections.empty()) return result;

  double sum_m = 0.0;
  double sum_box = 0.0;
  for (const Detection& det : detections) {
    sum_m += det.box.mean_depth;
    sum_box += box_mean_depth(depth, det.box);
  }
  const double n = static_cast<double>(detections.size());
  const double k = (sum_m / n) / (sum_box / n);
  if (!(k > 0.0) || !std::isfinite(k)) return result;
  result.k = k;
  result.n_o = static_cast<int>(detections.size());
  for (double& v : result.corrected.values) v *= k;
  return result;
}

}  // namespace jmod2
