#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jmod2/config.hpp"
#include "jmod2/dataset.hpp"
#include "jmod2/losses.hpp"
#include "jmod2/metrics.hpp"
#include "jmod2/model.hpp"
#include "jmod2/optimizer.hpp"

namespace jmod2 {

struct TrainConfig {
  double learning_rate = 1e-4;
  int steps = 2000;
  int batch_size = 4;
  std::uint64_t rng_seed = 1;
  LossWeights weights;
  // Write a checkpoint every N steps (0 = never); needs a checkpoint path.
  int checkpoint_every = 0;
  // Stop when the smoothed loss has not improved by plateau_tolerance
  // (relative) for `patience` steps. 0 disables early stopping.
  int patience = 0;
  double plateau_tolerance = 1e-3;

  void validate() const;
};

// Reads the TrainConfig and ModelConfig keys of a flat config document.
struct TrainingSetup {
  ModelConfig model;
  TrainConfig train;
  static TrainingSetup from_config(const KeyValueConfig& cfg);
};

struct StepLog {
  int step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  ParameterSet params;
  std::vector<StepLog> log;
  bool early_stopped = false;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  // Called with (step, params) every checkpoint_every steps.
  std::function<void(int, const ParameterSet&)> on_checkpoint;
};

// Raised when the loss becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainResult train(std::span<const TrainingSample> data, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// Continues from existing parameters (fresh optimizer state).
TrainResult train_from(ParameterSet params, std::span<const TrainingSample> data, const TrainConfig& config,
                       const TrainHooks& hooks = {});

// Loss and gradient of one sample, accumulated into `grads` with weight `scale`.
LossBreakdown accumulate_sample_gradient(const Model& model, const ParameterSet& params, const TrainingSample& sample,
                                         const LossWeights& weights, double scale, ParameterSet& grads);

// Mean loss breakdown over a dataset.
LossBreakdown dataset_loss(const Model& model, const ParameterSet& params, std::span<const TrainingSample> data,
                           const LossWeights& weights);

struct InferenceOptions {
  double threshold = 0.5;
  double iou_threshold = 0.5;
  double obstacle_range_m = kObstacleRangeM;
  bool corrected = false;
};

struct InferenceResult {
  ModelOutput output;
  std::vector<Detection> detections;
  CorrectionResult correction;
};

InferenceResult run_inference(const Model& model, const ParameterSet& params, const Tensor& rgb,
                              double threshold = 0.5);

MetricsReport evaluate_model(const Model& model, const ParameterSet& params, std::span<const Sample> samples,
                             const InferenceOptions& options = {});

enum class CorrectionMode { on, off, both };
CorrectionMode parse_correction_mode(const std::string& text);

struct CropPreset {
  int width = 0;
  int height = 0;
};

// Paper-scale presets: 256x160 (identity), 230x144, 204x128, 154x96, 128x80.
std::vector<CropPreset> full_crop_presets();
// The same zoom factors at toy resolution: 64x40, 58x36, 51x32, 37x23, 32x20.
std::vector<CropPreset> toy_crop_presets();
std::vector<CropPreset> default_crop_presets(const ModelConfig& config);
// "256x160,230x144"
std::vector<CropPreset> parse_crop_presets(const std::string& text);

struct CropExperimentConfig {
  std::vector<CropPreset> crop_presets;
  CorrectionMode correction = CorrectionMode::both;
  double threshold = 0.5;
  double iou_threshold = 0.5;
  double obstacle_range_m = kObstacleRangeM;
};

struct CropRow {
  CropPreset crop;
  double focal_multiplier = 1.0;
  bool corrected = false;
  double rmse = 0.0;
  double sc_inv = 0.0;
  std::optional<double> depth_obs_rmse_mean;
  std::optional<double> det_obs_rmse_mean;
  double mean_k = 1.0;
  int images_corrected = 0;
};

struct CropTable {
  std::vector<CropRow> rows;
  const CropRow* find(int width, int height, bool corrected) const;
};

CropTable run_crop_experiment(const Model& model, const ParameterSet& params, std::span<const Sample> samples,
                              const CropExperimentConfig& config);

}  // namespace jmod2
