#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "jmod2/config.hpp"
#include "jmod2/groundtruth.hpp"
#include "jmod2/losses.hpp"
#include "jmod2/model.hpp"
#include "jmod2/synthdata.hpp"

namespace jmod2 {

// Recipe for a synthetic dataset: one SceneSpec per sample, seeds derived from
// rng_seed. Readable from a flat key/value file (keys match the field names).
struct DatasetSpec {
  ScalePreset preset = ScalePreset::toy;
  int num_samples = 100;
  std::uint64_t rng_seed = 7;
  int object_count = 2;
  Range object_size_range{1.5, 3.0};
  Range depth_range{3.0, 12.0};
  bool ground_plane = true;
  double camera_height = 1.5;
  double fov_deg = kDefaultHfovDeg;
  double far_clamp_m = kFarClampM;
  double obstacle_range_m = kObstacleRangeM;

  static DatasetSpec from_config(const KeyValueConfig& cfg);
  CameraModel camera() const;
  std::vector<SceneSpec> scene_specs() const;
};

// A sample plus everything the losses and metrics need.
struct TrainingSample {
  Sample sample;
  std::vector<ObstacleBox> boxes;
  TrainingTargets targets;
};

TrainingSample make_training_sample(Sample sample, const GridSpec& grid, double obstacle_range_m = kObstacleRangeM,
                                    const TargetScales& scales = {});

std::vector<TrainingSample> make_training_set(std::span<const Sample> samples, const GridSpec& grid,
                                              double obstacle_range_m = kObstacleRangeM);

// Renders a dataset in memory (no disk I/O).
std::vector<Sample> generate_samples(const DatasetSpec& spec);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace jmod2
