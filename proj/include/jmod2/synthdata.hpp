#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jmod2/tensor.hpp"

namespace jmod2 {

// Pinhole intrinsics. Pixel (u, v) has its centre at (u + 0.5, v + 0.5).
struct CameraModel {
  double focal_px = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  // Principal point at the image centre, focal derived from the horizontal FOV.
  static CameraModel from_fov(int width, int height, double hfov_deg);
  void validate() const;

  // Viewing ray through the centre of pixel (u, v), scaled so that z == 1.
  Vec3 ray(int u, int v) const {
    return {(u + 0.5 - cx) / focal_px, (v + 0.5 - cy) / focal_px, 1.0};
  }
  bool operator==(const CameraModel&) const = default;
};

inline constexpr double kDefaultHfovDeg = 81.5;
inline constexpr double kFarClampM = 40.0;
inline constexpr double kObstacleRangeM = 20.0;

struct Range {
  double min = 0.0;
  double max = 0.0;
};

enum class ObjectShape { box, cylinder };

// One obstacle standing on the ground plane (camera frame, y down). For boxes
// size = (width, height, depth); for cylinders width is the diameter.
struct SceneObject {
  ObjectShape shape = ObjectShape::box;
  double center_x = 0.0;
  double center_z = 10.0;
  double width = 1.0;
  double height = 1.0;
  double depth = 1.0;
  Vec3 albedo{0.8, 0.3, 0.2};
};

struct SceneSpec {
  std::uint64_t rng_seed = 0;
  int object_count = 2;
  Range object_size_range{1.0, 2.5};
  Range depth_range{3.0, 18.0};
  bool ground_plane = true;
  double camera_height = 1.5;
  double far_clamp = kFarClampM;
  // When non-empty these are rendered instead of randomly placed objects.
  std::vector<SceneObject> objects;

  void validate() const;
};

struct Sample {
  Tensor rgb;      // 3 x H x W, values in [0, 1]
  DepthMap depth;  // meters, saturated at the far clamp
  Mask seg;        // 1 = obstacle
  CameraModel camera;
};

// Throws std::invalid_argument for an invalid spec or camera.
Sample generate_sample(const SceneSpec& spec, const CameraModel& camera);

// Objects that generate_sample would place for this spec.
std::vector<SceneObject> layout_objects(const SceneSpec& spec, const CameraModel& camera);

// Centre crop of crop_w x crop_h resampled back to the original size. RGB is
// bilinear, depth and seg nearest-neighbour; depth values are unchanged. The
// returned camera carries the effective focal length focal * W / crop_w.
Sample center_crop_resample(const Sample& sample, int crop_w, int crop_h);

struct DatasetManifest {
  std::vector<std::string> samples;
  CameraModel camera;
  double far_clamp_m = kFarClampM;
  double obstacle_range_m = kObstacleRangeM;
};

// Renders every spec and writes <out_dir>/<id>/{rgb.ppm,depth.f32,seg.pgm}
// plus <out_dir>/manifest.json. Ids are zero-padded indices.
DatasetManifest render_dataset(std::span<const SceneSpec> specs, const CameraModel& camera,
                               const std::filesystem::path& out_dir,
                               double obstacle_range_m = kObstacleRangeM);

}  // namespace jmod2
