#pragma once

#include <span>
#include <vector>

#include "jmod2/groundtruth.hpp"
#include "jmod2/tensor.hpp"

namespace jmod2 {

struct Detection {
  ObstacleBox box;  // mean_depth / var_depth in meters / meters^2
  double confidence = 0.0;
  int row = 0;
  int col = 0;
};

// Cells with confidence >= threshold, as boxes clamped to the image, sorted by
// descending confidence (ties by ascending cell index).
std::vector<Detection> decode_detections(const DetectionGrid& grid, const GridSpec& spec, double threshold = 0.5,
                                         const TargetScales& scales = {});

// Half-open pixel index range covered by a box: pixel u is inside when its
// centre u + 0.5 lies in [x_min, x_max). Never empty for a box inside the image.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
};
PixelRect pixel_rect(const ObstacleBox& box, int width, int height);

// Mean depth over every pixel of the box rectangle.
double box_mean_depth(const DepthMap& depth, const ObstacleBox& box);

struct CorrectionResult {
  double k = 1.0;
  int n_o = 0;
  DepthMap corrected;
};

// k = mean_j(m_j) / mean_j(mean depth inside box j); corrected = k * depth.
// Falls back to k = 1 when there are no detections.
CorrectionResult correction_factor(std::span<const Detection> detections, const DepthMap& depth);

}  // namespace jmod2
