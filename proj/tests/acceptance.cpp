// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any of them fails. The training-based checks share one
// trained toy model.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "jmod2/dataset.hpp"
#include "jmod2/harness.hpp"
#include "jmod2/metrics.hpp"
#include "jmod2/optimizer.hpp"
#include "jmod2/parallel.hpp"
#include "oracles.hpp"

#ifndef JMOD2_SOURCE_DIR
#error "JMOD2_SOURCE_DIR must point at the source tree"
#endif

using namespace jmod2;

namespace {

int failures = 0;

void report(int id, const char* what, bool ok, const std::string& detail) {
  std::printf("[%2d] %-4s %s: %s\n", id, ok ? "PASS" : "FAIL", what, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> indices_in(const ParameterSet& p, Branch b) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < p.scalar_count(); ++i) {
    if (p.scalar_branch(i) == b) out.push_back(i);
  }
  return out;
}

double max_abs_over(const ParameterSet& p, const std::vector<std::size_t>& idx) {
  double m = 0.0;
  for (std::size_t i : idx) m = std::max(m, std::abs(p.scalar(i)));
  return m;
}

void gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig cfg = ModelConfig::toy();
  const Model model(cfg);
  DatasetSpec spec;
  spec.num_samples = 1;
  spec.rng_seed = 11;
  const auto samples = generate_samples(spec);
  const TrainingSample ts = make_training_sample(samples[0], cfg.grid);
  auto params = init_parameters(cfg, 3);
  const LossWeights w;

  ParameterSet grads = params.zeros_like();
  accumulate_sample_gradient(model, params, ts, w, 1.0, grads);
  auto loss = [&] { return total_loss(model.forward(params, ts.sample.rgb), ts.targets, w).total; };

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> pick(0, params.scalar_count() - 1);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t i = pick(rng);
    const double fd = oracle::central_difference(loss, params.scalar(i), 1e-6);
    worst = std::max(worst, oracle::relative_error(fd, grads.scalar(i), 1e-8));
  }
  const double t = seconds_since(t0);
  report(1, "gradient check", worst < 1e-4 && t < 300.0,
         fmt("200 of %zu parameters, worst relative error %.2e, %.1f s", params.scalar_count(), worst, t));
}

void loss_zeroing() {
  DatasetSpec spec;
  spec.num_samples = 5;
  spec.rng_seed = 5;
  const auto samples = generate_samples(spec);
  const GridSpec grid = ModelConfig::toy().grid;
  double worst = 0.0;
  for (const Sample& s : samples) {
    const TrainingSample ts = make_training_sample(s, grid);
    const ModelOutput perfect{ts.targets.depth, ts.targets.detections};
    const LossBreakdown l = total_loss(perfect, ts.targets, LossWeights{});
    for (double v : {l.depth_scale_inv, l.depth_grad_normal, l.det_coord, l.det_size, l.det_conf_obj,
                     l.det_conf_noobj, l.det_mean, l.det_var, l.total}) {
      worst = std::max(worst, std::abs(v));
    }
  }
  report(2, "loss is zero at the ground truth", worst < 1e-10, fmt("largest component %.2e", worst));
}

void hand_values() {
  // Constant depth predicted at twice the distance. The prediction is a pure
  // rescaling of the ground truth, so the tangent term vanishes as well.
  const CameraModel cam = CameraModel::from_fov(16, 10, 60.0);
  const DepthMap gt(16, 10, 5.0), pred(16, 10, 10.0);
  const double depth = depth_loss(pred, gt, compute_normals(gt, cam), cam, LossWeights{}).total;
  const double depth_expected = 0.5 * std::log(2.0) * std::log(2.0);

  // Empty cell with C = 1 predicted: lambda_noobj * 1^2.
  const GridSpec one{1, 1, 8};
  DetectionGrid empty_pred(one);
  empty_pred.cell(0, kConfidence) = 1.0;
  const double noobj = detection_loss(empty_pred, DetectionGrid(one), LossWeights{}).total;

  // Occupied cell predicted exactly except x off by 0.2: lambda_coord * 0.2^2.
  DetectionGrid target(one);
  target.cell(0, kCenterX) = 0.4;
  target.cell(0, kCenterY) = 0.6;
  target.cell(0, kWidth) = 0.2;
  target.cell(0, kHeight) = 0.3;
  target.cell(0, kConfidence) = 1.0;
  target.cell(0, kMean) = 0.5;
  target.cell(0, kVar) = 0.1;
  DetectionGrid shifted = target;
  shifted.cell(0, kCenterX) += 0.2;
  const double coord = detection_loss(shifted, target, LossWeights{}).total;

  const double err = std::max({std::abs(depth - depth_expected), std::abs(noobj - 0.05), std::abs(coord - 0.01)});
  report(3, "hand-computed loss values", err < 1e-9,
         fmt("depth %.12f (want %.12f), empty cell %.12f (want 0.05), shifted centre %.12f (want 0.01)", depth,
             depth_expected, noobj, coord));
}

void metric_scale_invariance() {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> depth(0.5, 40.0), scale(0.1, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    DepthMap pred(12, 8), gt(12, 8);
    for (double& v : pred.values) v = depth(rng);
    for (double& v : gt.values) v = depth(rng);
    const double s = scale(rng);
    DepthMap scaled = pred;
    for (double& v : scaled.values) v *= s;
    worst = std::max(worst, std::abs(sc_inv_rmse(scaled, gt) - sc_inv_rmse(pred, gt)));
  }
  // The loss keeps only half of the squared-sum term, so a global scale moves it.
  DepthMap pred(12, 8), gt(12, 8);
  for (double& v : pred.values) v = depth(rng);
  for (double& v : gt.values) v = depth(rng);
  DepthMap doubled = pred;
  for (double& v : doubled.values) v *= 2.0;
  const double loss_shift = std::abs(scale_invariant_loss_term(doubled, gt) - scale_invariant_loss_term(pred, gt));
  report(4, "metric scale invariance", worst < 1e-9 && loss_shift > 1e-3,
         fmt("metric drift %.2e over 100 triples; loss moves by %.4f at s = 2", worst, loss_shift));
}

void encode_decode_roundtrip() {
  std::mt19937 rng(31);
  const GridSpec grid = ModelConfig::full().grid;
  const int w = grid.image_width(), h = grid.image_height();
  std::uniform_int_distribution<int> count(1, 12), xs(0, w - 2), ys(0, h - 2);
  std::uniform_real_distribution<double> depth(1.0, 20.0);
  double worst_center = 0.0;
  int size_mismatch = 0, missing = 0, extra = 0, survivors = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<ObstacleBox> boxes(static_cast<std::size_t>(count(rng)));
    for (ObstacleBox& b : boxes) {
      const int x0 = xs(rng), y0 = ys(rng);
      b.x_min = x0;
      b.y_min = y0;
      b.x_max = std::uniform_int_distribution<int>(x0 + 1, w)(rng);
      b.y_max = std::uniform_int_distribution<int>(y0 + 1, h)(rng);
      b.mean_depth = depth(rng);
    }
    // Survivors: per cell, the nearest box whose centre falls there.
    std::vector<int> owner(static_cast<std::size_t>(grid.cells()), -1);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const int col = std::min(static_cast<int>(boxes[i].center_x() / grid.cell_px), grid.cells_x - 1);
      const int row = std::min(static_cast<int>(boxes[i].center_y() / grid.cell_px), grid.cells_y - 1);
      int& o = owner[static_cast<std::size_t>(row * grid.cells_x + col)];
      if (o < 0 || boxes[i].mean_depth < boxes[o].mean_depth) o = static_cast<int>(i);
    }
    const auto dets = decode_detections(encode_targets(boxes, grid), grid, 0.5);
    std::vector<bool> seen(owner.size(), false);
    for (const Detection& d : dets) {
      const int cell = d.row * grid.cells_x + d.col;
      const int o = owner[static_cast<std::size_t>(cell)];
      if (o < 0) {
        ++extra;
        continue;
      }
      seen[static_cast<std::size_t>(cell)] = true;
      const ObstacleBox& b = boxes[o];
      worst_center = std::max({worst_center, std::abs(d.box.center_x() - b.center_x()),
                               std::abs(d.box.center_y() - b.center_y())});
      if (d.box.width() != b.width() || d.box.height() != b.height()) ++size_mismatch;
    }
    for (std::size_t c = 0; c < owner.size(); ++c) {
      if (owner[c] >= 0) {
        ++survivors;
        if (!seen[c]) ++missing;
      }
    }
  }
  report(5, "encode/decode roundtrip",
         worst_center <= 0.5 && size_mismatch == 0 && missing == 0 && extra == 0,
         fmt("%d surviving boxes, worst centre error %.2e px, %d size mismatches, %d missing, %d extra",
             survivors, worst_center, size_mismatch, missing, extra));
}

bool same_as_oracle(const DepthMap& depth, const Mask& seg, double max_range, int min_pixels) {
  const int w = depth.width, h = depth.height;
  std::vector<bool> fg(depth.values.size());
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = seg.values[i] != 0 && depth.values[i] <= max_range;
  std::vector<oracle::Component> want;
  for (auto& c : oracle::components(fg, depth.values, w, h)) {
    if (static_cast<int>(c.pixels.size()) >= min_pixels) want.push_back(std::move(c));
  }
  const auto got = extract_obstacles(depth, seg, max_range, min_pixels);
  if (got.size() != want.size()) return false;
  for (std::size_t k = 0; k < got.size(); ++k) {
    const ObstacleBox& b = got[k];
    const oracle::Component& c = want[k];
    if (b.pixels != c.pixels || b.pixel_count != static_cast<int>(c.pixels.size())) return false;
    if (b.x_min != c.x_min || b.y_min != c.y_min || b.x_max != c.x_max + 1 || b.y_max != c.y_max + 1) return false;
    if (b.mean_depth != c.mean || b.var_depth != c.var) return false;
  }
  return true;
}

void extraction_oracle() {
  std::mt19937 rng(4242);
  std::uniform_real_distribution<double> depth(1.0, 30.0), density(0.3, 0.75), unit(0.0, 1.0);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    DepthMap d(16, 16);
    Mask seg(16, 16);
    const double p = density(rng);
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      d.values[i] = depth(rng);
      seg.values[i] = unit(rng) < p ? 1 : 0;
    }
    if (!same_as_oracle(d, seg, kObstacleRangeM, 16) || !same_as_oracle(d, seg, kObstacleRangeM, 1)) ++mismatches;
  }
  report(6, "obstacle extraction matches flood fill", mismatches == 0,
         fmt("%d of 1000 random 16x16 instances differ", mismatches));
}

void correction_recovery() {
  DatasetSpec spec;
  spec.preset = ScalePreset::full;
  spec.num_samples = 80;
  spec.rng_seed = 19;
  const auto samples = generate_samples(spec);
  double worst_k = 0.0, worst_rmse = 0.0;
  int scenes = 0;
  for (const Sample& s : samples) {
    const auto boxes = extract_obstacles(s.depth, s.seg);
    if (boxes.empty()) continue;
    if (++scenes > 50) break;
    // A detector that reports each box's true mean depth over the box rectangle.
    std::vector<Detection> dets;
    for (const ObstacleBox& b : boxes) {
      Detection d;
      d.box = b;
      d.box.pixels.clear();
      d.box.mean_depth = box_mean_depth(s.depth, b);
      d.confidence = 1.0;
      dets.push_back(d);
    }
    for (double scale : {0.5, 2.0, 4.0}) {
      DepthMap pred = s.depth;
      for (double& v : pred.values) v /= scale;
      const CorrectionResult r = correction_factor(dets, pred);
      worst_k = std::max(worst_k, std::abs(r.k - scale));
      worst_rmse = std::max(worst_rmse, rmse_linear(r.corrected, s.depth));
    }
  }
  scenes = std::min(scenes, 50);
  report(7, "scale correction recovers a global scale", scenes == 50 && worst_k < 1e-6 && worst_rmse < 1e-6,
         fmt("%d scenes, worst |k - s| %.2e, worst corrected RMSE %.2e m", scenes, worst_k, worst_rmse));
}

struct Trained {
  ParameterSet params;
  std::vector<Sample> samples;
};

Trained toy_training() {
  const std::string root = JMOD2_SOURCE_DIR;
  const DatasetSpec data_spec = DatasetSpec::from_config(KeyValueConfig::load(root + "/configs/toy_data.cfg"));
  const TrainingSetup setup = TrainingSetup::from_config(KeyValueConfig::load(root + "/configs/toy_train.cfg"));
  Trained out;
  out.samples = generate_samples(data_spec);
  const auto set = make_training_set(out.samples, setup.model.grid, data_spec.obstacle_range_m);
  const Model model(setup.model);

  const auto t0 = std::chrono::steady_clock::now();
  const ParameterSet initial = init_parameters(setup.model, setup.train.rng_seed);
  const double before = dataset_loss(model, initial, set, setup.train.weights).total;
  const TrainResult result = train(set, setup.model, setup.train);
  const double after = dataset_loss(model, result.params, set, setup.train.weights).total;
  InferenceOptions opt;
  opt.obstacle_range_m = data_spec.obstacle_range_m;
  const MetricsReport m = evaluate_model(model, result.params, out.samples, opt);
  const double t = seconds_since(t0);

  // The per-step log is a 4-sample minibatch; report its endpoints too.
  double tail = 0.0;
  const std::size_t n_tail = std::min<std::size_t>(100, result.log.size());
  for (std::size_t i = result.log.size() - n_tail; i < result.log.size(); ++i) tail += result.log[i].loss.total;
  tail /= static_cast<double>(n_tail);

  const double ratio = after / before;
  report(8, "toy training", static_cast<int>(result.log.size()) == 2000 && ratio <= 0.5 && m.recall >= 0.7 && t < 900.0,
         fmt("%zu steps, full-set loss %.4f -> %.4f (ratio %.3f; logged step 1 %.4f, last-100 mean %.4f), "
             "recall %.3f (%d/%d, precision %.3f) at IOU 0.5, %.1f s",
             result.log.size(), before, after, ratio, result.log.front().loss.total, tail, m.recall, m.n_matched,
             m.n_gt, m.precision, t));
  out.params = result.params;
  return out;
}

void crop_trend(const Trained& trained) {
  const Model model(trained.params.config);
  CropExperimentConfig cfg;
  cfg.crop_presets = toy_crop_presets();
  const CropTable table = run_crop_experiment(model, trained.params, trained.samples, cfg);

  for (bool corrected : {false, true}) {
    std::printf("     %s\n", corrected ? "corrected" : "uncorrected");
    std::printf("     %-7s %6s %9s %9s %10s %10s %7s\n", "crop", "zoom", "rmse", "sc-inv", "depth-obs", "det-obs",
                "mean k");
    for (const CropRow& r : table.rows) {
      if (r.corrected != corrected) continue;
      std::printf("     %3dx%-3d %6.3f %9.4f %9.4f %10.4f %10.4f %7.3f\n", r.crop.width, r.crop.height,
                  r.focal_multiplier, r.rmse, r.sc_inv, r.depth_obs_rmse_mean.value_or(NAN),
                  r.det_obs_rmse_mean.value_or(NAN), r.mean_k);
    }
  }

  const auto presets = toy_crop_presets();
  auto worse = [&](const CropPreset& p) {
    return table.find(p.width, p.height, true)->rmse > table.find(p.width, p.height, false)->rmse;
  };
  const bool identity_worse = worse(presets.front());
  const bool big_zoom_better = !worse(presets[presets.size() - 2]) && !worse(presets.back());
  report(9, "crop trend", identity_worse && big_zoom_better,
         fmt("corrected worse at identity: %s; corrected better at the two largest zooms: %s",
             identity_worse ? "yes" : "no", big_zoom_better ? "yes" : "no"));
}

void shared_encoder(const std::vector<Sample>& samples) {
  const ModelConfig cfg = ModelConfig::toy();
  const Model model(cfg);
  const TrainingSample ts = make_training_sample(samples.front(), cfg.grid);
  const ParameterSet params = init_parameters(cfg, 8);
  const LossWeights w;

  ForwardCache cache;
  const ModelOutput out = model.forward(params, ts.sample.rgb, &cache);
  LossGradients g;
  total_loss(out, ts.targets, w, &g);

  ParameterSet depth_grads = params.zeros_like();
  model.backward(params, cache, &g.depth, nullptr, depth_grads);
  ParameterSet det_grads = params.zeros_like();
  model.backward(params, cache, nullptr, &g.detections, det_grads);

  ParameterSet masked = depth_grads;
  for (std::size_t i : indices_in(params, Branch::detection)) masked.scalar(i) = 0.0;

  ParameterSet step_full = params, step_masked = params;
  Adam a(params), b(params);
  a.step(step_full, depth_grads);
  b.step(step_masked, masked);
  const DepthMap depth_full = model.forward(step_full, ts.sample.rgb).depth;
  const DepthMap depth_masked = model.forward(step_masked, ts.sample.rgb).depth;
  const bool unchanged = depth_full == depth_masked;
  const bool moved = !(depth_full == out.depth);

  const auto enc = indices_in(params, Branch::encoder);
  const double enc_from_depth = max_abs_over(depth_grads, enc);
  const double enc_from_det = max_abs_over(det_grads, enc);
  const double det_from_depth = max_abs_over(depth_grads, indices_in(params, Branch::detection));
  report(10, "shared encoder", unchanged && moved && enc_from_depth > 0.0 && enc_from_det > 0.0 && det_from_depth == 0.0,
         fmt("depth after step identical with detection grads zeroed: %s (and differs from before: %s); "
             "max |encoder grad| from depth loss %.2e, from detection loss %.2e",
             unchanged ? "yes" : "no", moved ? "yes" : "no", enc_from_depth, enc_from_det));
}

}  // namespace

int main() {
  configure_threads_from_env();
  std::printf("acceptance run, %d thread(s)\n", max_threads());
  try {
    gradient_check();
    loss_zeroing();
    hand_values();
    metric_scale_invariance();
    encode_decode_roundtrip();
    extraction_oracle();
    correction_recovery();
    const Trained trained = toy_training();
    crop_trend(trained);
    shared_encoder(trained.samples);
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
