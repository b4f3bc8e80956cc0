#include "jmod2/dataset.hpp"

#include <exception>
#include <stdexcept>

#include "jmod2/image_io.hpp"

namespace jmod2 {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Range range_from(const KeyValueConfig& cfg, const std::string& key, Range fallback) {
  const auto v = cfg.get_doubles(key, {fallback.min, fallback.max});
  if (v.size() != 2) throw std::invalid_argument("config key '" + key + "' needs two values: min, max");
  return {v[0], v[1]};
}

}  // namespace

DatasetSpec DatasetSpec::from_config(const KeyValueConfig& cfg) {
  cfg.require_known({"scale_preset", "num_samples", "rng_seed", "object_count", "object_size_range", "depth_range",
                     "ground_plane", "camera_height", "fov_deg", "far_clamp_m", "obstacle_range_m"});
  DatasetSpec s;
  s.preset = parse_scale_preset(cfg.get_string("scale_preset", to_string(s.preset)));
  s.num_samples = static_cast<int>(cfg.get_int("num_samples", s.num_samples));
  s.rng_seed = static_cast<std::uint64_t>(cfg.get_int("rng_seed", static_cast<long long>(s.rng_seed)));
  s.object_count = static_cast<int>(cfg.get_int("object_count", s.object_count));
  s.object_size_range = range_from(cfg, "object_size_range", s.object_size_range);
  s.depth_range = range_from(cfg, "depth_range", s.depth_range);
  s.ground_plane = cfg.get_bool("ground_plane", s.ground_plane);
  s.camera_height = cfg.get_double("camera_height", s.camera_height);
  s.fov_deg = cfg.get_double("fov_deg", s.fov_deg);
  s.far_clamp_m = cfg.get_double("far_clamp_m", s.far_clamp_m);
  s.obstacle_range_m = cfg.get_double("obstacle_range_m", s.obstacle_range_m);
  if (s.num_samples < 0) throw std::invalid_argument("num_samples must be >= 0");
  return s;
}

CameraModel DatasetSpec::camera() const {
  const ModelConfig m = preset == ScalePreset::full ? ModelConfig::full() : ModelConfig::toy();
  return CameraModel::from_fov(m.input_w, m.input_h, fov_deg);
}

std::vector<SceneSpec> DatasetSpec::scene_specs() const {
  std::vector<SceneSpec> specs(static_cast<std::size_t>(num_samples));
  for (int i = 0; i < num_samples; ++i) {
    SceneSpec& s = specs[i];
    s.rng_seed = splitmix64(rng_seed * 0x100000001b3ULL + static_cast<std::uint64_t>(i));
    s.object_count = object_count;
    s.object_size_range = object_size_range;
    s.depth_range = depth_range;
    s.ground_plane = ground_plane;
    s.camera_height = camera_height;
    s.far_clamp = far_clamp_m;
    s.validate();
  }
  return specs;
}

TrainingSample make_training_sample(Sample sample, const GridSpec& grid, double obstacle_range_m,
                                    const TargetScales& scales) {
  if (grid.image_width() != sample.camera.width || grid.image_height() != sample.camera.height) {
    throw ShapeError("sample size does not match the detection grid");
  }
  TrainingSample t;
  t.boxes = extract_obstacles(sample.depth, sample.seg, obstacle_range_m);
  t.targets.depth = sample.depth;
  t.targets.normals = compute_normals(sample.depth, sample.camera);
  t.targets.camera = sample.camera;
  t.targets.detections = encode_targets(t.boxes, grid, scales);
  t.sample = std::move(sample);
  return t;
}

std::vector<TrainingSample> make_training_set(std::span<const Sample> samples, const GridSpec& grid,
                                              double obstacle_range_m) {
  std::vector<TrainingSample> out(samples.size());
  std::exception_ptr failure;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = make_training_sample(samples[i], grid, obstacle_range_m);
    } catch (...) {
#pragma omp critical(jmod2_training_set_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<Sample> generate_samples(const DatasetSpec& spec) {
  const auto scenes = spec.scene_specs();
  const CameraModel cam = spec.camera();
  std::vector<Sample> out(scenes.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(scenes.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = generate_sample(scenes[i], cam);
    } catch (...) {
#pragma omp critical(jmod2_generate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  LoadedDataset d;
  d.manifest = read_manifest(dir / "manifest.json");
  d.samples.reserve(d.manifest.samples.size());
  for (const std::string& id : d.manifest.samples) d.samples.push_back(read_sample(dir / id, d.manifest.camera));
  return d;
}

}  // namespace jmod2
