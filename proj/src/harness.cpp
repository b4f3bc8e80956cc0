#include "jmod2/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace jmod2 {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (checkpoint_every < 0 || patience < 0) throw std::invalid_argument("checkpoint_every and patience must be >= 0");
  weights.validate();
}

TrainingSetup TrainingSetup::from_config(const KeyValueConfig& cfg) {
  cfg.require_known({"scale_preset", "base_channels", "input_w", "input_h", "learning_rate", "optimizer", "steps",
                     "batch_size", "rng_seed", "lambda_coord", "lambda_obj", "lambda_noobj", "lambda_mean",
                     "lambda_var", "depth_grad_weight", "normal_term", "checkpoint_every", "patience",
                     "plateau_tolerance"});
  TrainingSetup s;
  const ScalePreset preset = parse_scale_preset(cfg.get_string("scale_preset", "toy"));
  const int base = static_cast<int>(cfg.get_int("base_channels", preset == ScalePreset::full ? 16 : 8));
  s.model = preset == ScalePreset::full ? ModelConfig::full(base) : ModelConfig::toy(base);
  if (cfg.get_int("input_w", s.model.input_w) != s.model.input_w ||
      cfg.get_int("input_h", s.model.input_h) != s.model.input_h) {
    throw std::invalid_argument("input_w/input_h do not match scale_preset " + to_string(preset));
  }
  if (const auto opt = cfg.get("optimizer"); opt && *opt != "adam") {
    throw std::invalid_argument("unsupported optimizer '" + *opt + "' (only adam)");
  }
  TrainConfig& t = s.train;
  t.learning_rate = cfg.get_double("learning_rate", t.learning_rate);
  t.steps = static_cast<int>(cfg.get_int("steps", t.steps));
  t.batch_size = static_cast<int>(cfg.get_int("batch_size", t.batch_size));
  t.rng_seed = static_cast<std::uint64_t>(cfg.get_int("rng_seed", static_cast<long long>(t.rng_seed)));
  t.weights.lambda_coord = cfg.get_double("lambda_coord", t.weights.lambda_coord);
  t.weights.lambda_obj = cfg.get_double("lambda_obj", t.weights.lambda_obj);
  t.weights.lambda_noobj = cfg.get_double("lambda_noobj", t.weights.lambda_noobj);
  t.weights.lambda_mean = cfg.get_double("lambda_mean", t.weights.lambda_mean);
  t.weights.lambda_var = cfg.get_double("lambda_var", t.weights.lambda_var);
  t.weights.depth_grad_weight = cfg.get_double("depth_grad_weight", t.weights.depth_grad_weight);
  const std::string mode = cfg.get_string("normal_term", "squared");
  if (mode == "squared") {
    t.weights.normal_term = NormalTermMode::squared;
  } else if (mode == "signed") {
    t.weights.normal_term = NormalTermMode::signed_literal;
  } else {
    throw std::invalid_argument("normal_term must be squared or signed");
  }
  t.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every", t.checkpoint_every));
  t.patience = static_cast<int>(cfg.get_int("patience", t.patience));
  t.plateau_tolerance = cfg.get_double("plateau_tolerance", t.plateau_tolerance);
  t.validate();
  return s;
}

LossBreakdown accumulate_sample_gradient(const Model& model, const ParameterSet& params, const TrainingSample& sample,
                                         const LossWeights& weights, double scale, ParameterSet& grads) {
  ForwardCache cache;
  const ModelOutput out = model.forward(params, sample.sample.rgb, &cache);
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(out.depth.values.begin(), out.depth.values.end(), finite) ||
      !std::all_of(out.detections.values.begin(), out.detections.values.end(), finite)) {
    throw DivergenceError("training diverged: non-finite network output");
  }
  LossGradients g;
  const LossBreakdown loss = total_loss(out, sample.targets, weights, &g);
  for (double& v : g.depth.values) v *= scale;
  for (double& v : g.detections.values) v *= scale;
  model.backward(params, cache, &g.depth, &g.detections, grads);
  return loss;
}

LossBreakdown dataset_loss(const Model& model, const ParameterSet& params, std::span<const TrainingSample> data,
                           const LossWeights& weights) {
  LossBreakdown sum;
  for (const TrainingSample& s : data) {
    const ModelOutput out = model.forward(params, s.sample.rgb);
    sum += total_loss(out, s.targets, weights);
  }
  if (!data.empty()) sum *= 1.0 / static_cast<double>(data.size());
  return sum;
}

TrainResult train(std::span<const TrainingSample> data, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainHooks& hooks) {
  return train_from(init_parameters(model_config, config.rng_seed), data, config, hooks);
}

TrainResult train_from(ParameterSet params, std::span<const TrainingSample> data, const TrainConfig& config,
                       const TrainHooks& hooks) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("training set is empty");
  const Model model(params.config);
  Adam adam(params, AdamConfig{config.learning_rate});

  std::mt19937_64 rng(config.rng_seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  ParameterSet grads = params.zeros_like();
  double smoothed = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const double scale = 1.0 / config.batch_size;

  for (int step = 1; step <= config.steps; ++step) {
    grads.set_zero();
    StepLog entry;
    entry.step = step;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      LossBreakdown loss = accumulate_sample_gradient(model, params, data[order[cursor++]], config.weights, scale, grads);
      loss *= scale;
      entry.loss += loss;
    }
    if (!std::isfinite(entry.loss.total)) {
      throw DivergenceError("training diverged: non-finite loss at step " + std::to_string(step));
    }
    adam.step(params, grads);
    result.log.push_back(entry);
    if (hooks.on_step) hooks.on_step(entry);
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(step, params);
    }

    if (config.patience > 0) {
      smoothed = step == 1 ? entry.loss.total : 0.95 * smoothed + 0.05 * entry.loss.total;
      if (smoothed < best * (1.0 - config.plateau_tolerance)) {
        best = smoothed;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  result.params = std::move(params);
  return result;
}

InferenceResult run_inference(const Model& model, const ParameterSet& params, const Tensor& rgb, double threshold) {
  InferenceResult r;
  r.output = model.forward(params, rgb);
  r.detections = decode_detections(r.output.detections, model.config().grid, threshold);
  r.correction = correction_factor(r.detections, r.output.depth);
  return r;
}

MetricsReport evaluate_model(const Model& model, const ParameterSet& params, std::span<const Sample> samples,
                             const InferenceOptions& options) {
  std::vector<EvalSample> eval(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    InferenceResult r = run_inference(model, params, s.rgb, options.threshold);
    EvalSample& e = eval[i];
    e.pred = options.corrected ? std::move(r.correction.corrected) : std::move(r.output.depth);
    e.gt = s.depth;
    e.seg = s.seg;
    e.gt_boxes = extract_obstacles(s.depth, s.seg, options.obstacle_range_m);
    e.detections = std::move(r.detections);
  }
  return evaluate(eval, options.iou_threshold);
}

CorrectionMode parse_correction_mode(const std::string& text) {
  if (text == "on") return CorrectionMode::on;
  if (text == "off") return CorrectionMode::off;
  if (text == "both") return CorrectionMode::both;
  throw std::invalid_argument("correction must be on, off or both");
}

std::vector<CropPreset> full_crop_presets() { return {{256, 160}, {230, 144}, {204, 128}, {154, 96}, {128, 80}}; }

std::vector<CropPreset> toy_crop_presets() { return {{64, 40}, {58, 36}, {51, 32}, {37, 23}, {32, 20}}; }

std::vector<CropPreset> default_crop_presets(const ModelConfig& config) {
  return config.scale_preset == ScalePreset::full ? full_crop_presets() : toy_crop_presets();
}

std::vector<CropPreset> parse_crop_presets(const std::string& text) {
  std::vector<CropPreset> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find_first_of("xX");
    if (x == std::string::npos) throw std::invalid_argument("crop preset '" + item + "' is not WxH");
    try {
      out.push_back({std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))});
    } catch (const std::exception&) {
      throw std::invalid_argument("crop preset '" + item + "' is not WxH");
    }
  }
  if (out.empty()) throw std::invalid_argument("no crop presets given");
  return out;
}

const CropRow* CropTable::find(int width, int height, bool corrected) const {
  for (const CropRow& r : rows) {
    if (r.crop.width == width && r.crop.height == height && r.corrected == corrected) return &r;
  }
  return nullptr;
}

CropTable run_crop_experiment(const Model& model, const ParameterSet& params, std::span<const Sample> samples,
                              const CropExperimentConfig& config) {
  CropTable table;
  const auto presets = config.crop_presets.empty() ? default_crop_presets(model.config()) : config.crop_presets;
  const bool want_off = config.correction != CorrectionMode::on;
  const bool want_on = config.correction != CorrectionMode::off;
  for (const CropPreset& preset : presets) {
    std::vector<EvalSample> plain(samples.size());
    std::vector<EvalSample> corrected(samples.size());
    double k_sum = 0.0;
    int k_count = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample cropped = center_crop_resample(samples[i], preset.width, preset.height);
      InferenceResult r = run_inference(model, params, cropped.rgb, config.threshold);
      if (r.correction.n_o > 0) {
        k_sum += r.correction.k;
        ++k_count;
      }
      auto gt_boxes = extract_obstacles(cropped.depth, cropped.seg, config.obstacle_range_m);
      corrected[i] = {std::move(r.correction.corrected), cropped.depth, cropped.seg, gt_boxes, r.detections};
      plain[i] = {std::move(r.output.depth), cropped.depth, cropped.seg, std::move(gt_boxes), std::move(r.detections)};
    }
    const double multiplier = static_cast<double>(samples.empty() ? preset.width : samples.front().camera.width) /
                              preset.width;
    auto make_row = [&](std::span<const EvalSample> eval, bool is_corrected) {
      const MetricsReport m = evaluate(eval, config.iou_threshold);
      CropRow row;
      row.crop = preset;
      row.focal_multiplier = multiplier;
      row.corrected = is_corrected;
      row.rmse = m.rmse_linear;
      row.sc_inv = m.sc_inv_rmse;
      row.depth_obs_rmse_mean = m.depth_obs_rmse_mean;
      row.det_obs_rmse_mean = m.det_obs_rmse_mean;
      row.mean_k = k_count > 0 ? k_sum / k_count : 1.0;
      row.images_corrected = k_count;
      return row;
    };
    if (want_on) table.rows.push_back(make_row(corrected, true));
    if (want_off) table.rows.push_back(make_row(plain, false));
  }
  return table;
}

}  // namespace jmod2
