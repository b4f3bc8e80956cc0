#include "jmod2/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace jmod2 {

std::vector<ObstacleBox> extract_obstacles(const DepthMap& depth, const Mask& seg, double max_range,
                                           int min_pixels) {
  if (!depth.same_shape(seg)) throw ShapeError("depth and segmentation are not aligned");
  const int w = depth.width;
  const int h = depth.height;
  auto eligible = [&](std::size_t i) { return seg.values[i] != 0 && depth.values[i] <= max_range; };

  std::vector<std::uint8_t> visited(depth.size(), 0);
  std::vector<ObstacleBox> boxes;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < depth.size(); ++start) {
    if (visited[start] || !eligible(start)) continue;
    visited[start] = 1;
    queue.assign(1, start);
    std::vector<std::size_t> pixels;
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      pixels.push_back(i);
      const int x = static_cast<int>(i % w);
      const int y = static_cast<int>(i / w);
      const std::size_t neighbours[4] = {x > 0 ? i - 1 : i, x + 1 < w ? i + 1 : i,
                                         y > 0 ? i - w : i, y + 1 < h ? i + w : i};
      for (std::size_t n : neighbours) {
        if (n != i && !visited[n] && eligible(n)) {
          visited[n] = 1;
          queue.push_back(n);
        }
      }
    }
    if (static_cast<int>(pixels.size()) < min_pixels) continue;

    std::sort(pixels.begin(), pixels.end());
    ObstacleBox box;
    box.x_min = box.y_min = std::numeric_limits<double>::max();
    box.x_max = box.y_max = std::numeric_limits<double>::lowest();
    double sum = 0.0;
    for (std::size_t i : pixels) {
      const double x = static_cast<double>(i % w);
      const double y = static_cast<double>(i / w);
      box.x_min = std::min(box.x_min, x);
      box.y_min = std::min(box.y_min, y);
      box.x_max = std::max(box.x_max, x + 1.0);
      box.y_max = std::max(box.y_max, y + 1.0);
      sum += depth.values[i];
    }
    const double n = static_cast<double>(pixels.size());
    box.mean_depth = sum / n;
    double sq = 0.0;
    for (std::size_t i : pixels) {
      const double d = depth.values[i] - box.mean_depth;
      sq += d * d;
    }
    box.var_depth = sq / n;
    box.pixel_count = static_cast<int>(pixels.size());
    box.pixels = std::move(pixels);
    boxes.push_back(std::move(box));
  }
  return boxes;
}

DetectionGrid encode_targets(std::span<const ObstacleBox> boxes, const GridSpec& grid,
                             const TargetScales& scales) {
  DetectionGrid target(grid);
  std::vector<const ObstacleBox*> owner(static_cast<std::size_t>(grid.cells()), nullptr);
  const double below_one = std::nextafter(1.0, 0.0);
  const double img_w = grid.image_width();
  const double img_h = grid.image_height();
  for (const ObstacleBox& box : boxes) {
    const double cx = box.center_x();
    const double cy = box.center_y();
    const int col = std::clamp(static_cast<int>(std::floor(cx / grid.cell_px)), 0, grid.cells_x - 1);
    const int row = std::clamp(static_cast<int>(std::floor(cy / grid.cell_px)), 0, grid.cells_y - 1);
    const std::size_t index = static_cast<std::size_t>(row) * grid.cells_x + col;
    if (owner[index] != nullptr && owner[index]->mean_depth <= box.mean_depth) continue;
    owner[index] = &box;
    target.at(row, col, kCenterX) = std::clamp(cx / grid.cell_px - col, 0.0, below_one);
    target.at(row, col, kCenterY) = std::clamp(cy / grid.cell_px - row, 0.0, below_one);
    target.at(row, col, kWidth) = std::clamp(box.width() / img_w, 0.0, 1.0);
    target.at(row, col, kHeight) = std::clamp(box.height() / img_h, 0.0, 1.0);
    target.at(row, col, kConfidence) = 1.0;
    target.at(row, col, kMean) = std::clamp(box.mean_depth / scales.mean_scale, 0.0, 1.0);
    target.at(row, col, kVar) = std::clamp(box.var_depth / scales.var_scale, 0.0, 1.0);
  }
  return target;
}

NormalMap compute_normals(const DepthMap& depth, const CameraModel& camera) {
  const int w = depth.width;
  const int h = depth.height;
  if (w < 2 || h < 2) throw ShapeError("compute_normals needs at least 2x2 pixels");
  if (w != camera.width || h != camera.height) throw ShapeError("depth map does not match the camera");
  auto point = [&](int x, int y) { return camera.ray(x, y) * depth.at(x, y); };

  NormalMap normals(w, h);
  for (int y = 0; y < h; ++y) {
    const int by = stencil_base(y, h);
    for (int x = 0; x < w; ++x) {
      const int bx = stencil_base(x, w);
      if (bx != x || by != y) continue;  // filled from the base pixel below
      const Vec3 p = point(bx, by);
      const Vec3 n = cross(point(bx + 1, by) - p, point(bx, by + 1) - p);
      const double len = norm(n);
      Vec3 unit = len > 0.0 ? n * (1.0 / len) : Vec3{0.0, 0.0, -1.0};
      if (dot(unit, camera.ray(bx, by)) > 0.0) unit = unit * -1.0;
      normals.at(x, y) = unit;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      normals.at(x, y) = normals.at(stencil_base(x, w), stencil_base(y, h));
    }
  }
  return normals;
}

}  // namespace jmod2
