#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "jmod2/synthdata.hpp"
#include "jmod2/tensor.hpp"

namespace jmod2 {

// Axis-aligned box in pixel coordinates, [x_min, x_max) x [y_min, y_max),
// with depth statistics over the obstacle's pixels.
struct ObstacleBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  double mean_depth = 0.0;  // meters
  double var_depth = 0.0;   // meters^2, population variance
  int pixel_count = 0;
  // Row-major indices of the component pixels, ascending. Empty for boxes that
  // did not come from extract_obstacles (e.g. decoded detections).
  std::vector<std::size_t> pixels;

  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

struct GridSpec {
  int cells_x = 8;
  int cells_y = 5;
  int cell_px = 32;

  int image_width() const { return cells_x * cell_px; }
  int image_height() const { return cells_y * cell_px; }
  int cells() const { return cells_x * cells_y; }
  bool operator==(const GridSpec&) const = default;
};

inline constexpr int kGridChannels = 7;

// Channel order within a cell.
enum GridChannel : int { kCenterX = 0, kCenterY, kWidth, kHeight, kConfidence, kMean, kVar };

// cells_y x cells_x x 7, channel innermost. The flattened view is
// (cells_x * cells_y) x 7 with cell index row * cells_x + col.
struct DetectionGrid {
  int cells_x = 0;
  int cells_y = 0;
  std::vector<double> values;

  DetectionGrid() = default;
  explicit DetectionGrid(const GridSpec& spec, double fill = 0.0)
      : cells_x(spec.cells_x), cells_y(spec.cells_y),
        values(static_cast<std::size_t>(spec.cells()) * kGridChannels, fill) {}

  int cells() const { return cells_x * cells_y; }
  double& at(int row, int col, int ch) { return values[(static_cast<std::size_t>(row) * cells_x + col) * kGridChannels + ch]; }
  double at(int row, int col, int ch) const { return values[(static_cast<std::size_t>(row) * cells_x + col) * kGridChannels + ch]; }
  double& cell(int index, int ch) { return values[static_cast<std::size_t>(index) * kGridChannels + ch]; }
  double cell(int index, int ch) const { return values[static_cast<std::size_t>(index) * kGridChannels + ch]; }
  bool same_shape(const DetectionGrid& o) const { return cells_x == o.cells_x && cells_y == o.cells_y && values.size() == o.values.size(); }
};

// Normalisation of the depth-statistics channels: m / mean_scale and
// v / var_scale, both clipped to [0, 1].
struct TargetScales {
  double mean_scale = kObstacleRangeM;
  double var_scale = 25.0;
};

// Connected components (4-connectivity) of {seg == 1 and depth <= max_range},
// keeping those with at least min_pixels pixels. Boxes are ordered by the
// raster position of their first pixel.
std::vector<ObstacleBox> extract_obstacles(const DepthMap& depth, const Mask& seg,
                                           double max_range = kObstacleRangeM, int min_pixels = 16);

// One target per cell: the cell holding a box centre. When several centres
// share a cell, the nearest obstacle (smallest mean depth) wins.
DetectionGrid encode_targets(std::span<const ObstacleBox> boxes, const GridSpec& grid,
                             const TargetScales& scales = {});

// Per-pixel unit normals from forward-difference tangents of the back-projected
// depth; the last row and column reuse their inner neighbour's stencil.
NormalMap compute_normals(const DepthMap& depth, const CameraModel& camera);

// Top-left pixel of the forward-difference stencil used at (x, y).
inline int stencil_base(int coord, int size) { return coord < size - 1 ? coord : size - 2; }

}  // namespace jmod2
