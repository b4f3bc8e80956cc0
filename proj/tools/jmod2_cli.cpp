#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "jmod2/dataset.hpp"
#include "jmod2/harness.hpp"
#include "jmod2/image_io.hpp"
#include "jmod2/parallel.hpp"
#include "jmod2/serialize.hpp"

namespace fs = std::filesystem;
using namespace jmod2;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

fs::path with_extension(fs::path path, const std::string& ext) { return path.replace_extension(ext); }

int cmd_generate(const fs::path& spec_path, const fs::path& out_dir) {
  const DatasetSpec spec = DatasetSpec::from_config(KeyValueConfig::load(spec_path));
  const auto scenes = spec.scene_specs();
  const DatasetManifest manifest = render_dataset(scenes, spec.camera(), out_dir, spec.obstacle_range_m);
  std::printf("wrote %zu samples to %s\n", manifest.samples.size(), out_dir.string().c_str());
  return 0;
}

int cmd_train(const fs::path& data_dir, const fs::path& config_path, const fs::path& ckpt) {
  const TrainingSetup setup = TrainingSetup::from_config(KeyValueConfig::load(config_path));
  const LoadedDataset data = load_dataset(data_dir);
  const CameraModel& cam = data.manifest.camera;
  if (cam.width != setup.model.input_w || cam.height != setup.model.input_h) {
    throw std::invalid_argument("dataset resolution does not match the model preset");
  }
  const auto set = make_training_set(data.samples, setup.model.grid, data.manifest.obstacle_range_m);

  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  const fs::path log_path = fs::path(ckpt).concat(".log.jsonl");
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write " + log_path.string());

  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    log << to_json(s).dump() << '\n';
    if (s.step == 1 || s.step % 100 == 0) {
      std::printf("step %5d  loss %.6f\n", s.step, s.loss.total);
      std::fflush(stdout);
    }
  };
  hooks.on_checkpoint = [&](int step, const ParameterSet& params) {
    save_parameters(params, fs::path(ckpt).concat(".step" + std::to_string(step)));
  };
  const TrainResult result = train(set, setup.model, setup.train, hooks);
  save_parameters(result.params, ckpt);
  std::printf("saved %s after %zu steps%s\n", ckpt.string().c_str(), result.log.size(),
              result.early_stopped ? " (early stop)" : "");
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data_dir, const fs::path& report, double threshold,
             double iou_threshold, bool corrected) {
  const ParameterSet params = load_parameters(ckpt);
  const Model model(params.config);
  const LoadedDataset data = load_dataset(data_dir);
  InferenceOptions opt;
  opt.threshold = threshold;
  opt.iou_threshold = iou_threshold;
  opt.obstacle_range_m = data.manifest.obstacle_range_m;
  opt.corrected = corrected;
  const MetricsReport m = evaluate_model(model, params, data.samples, opt);
  write_text(report, to_json(m).dump(2) + "\n");
  write_text(with_extension(report, ".csv"), metrics_csv(m));
  std::cout << metrics_csv(m);
  return 0;
}

int cmd_crop(const fs::path& ckpt, const fs::path& data_dir, const std::string& presets, const std::string& correction,
             const fs::path& report, double threshold) {
  const ParameterSet params = load_parameters(ckpt);
  const Model model(params.config);
  const LoadedDataset data = load_dataset(data_dir);
  CropExperimentConfig cfg;
  cfg.crop_presets = presets.empty() ? default_crop_presets(params.config) : parse_crop_presets(presets);
  cfg.correction = parse_correction_mode(correction);
  cfg.threshold = threshold;
  cfg.obstacle_range_m = data.manifest.obstacle_range_m;
  const CropTable table = run_crop_experiment(model, params, data.samples, cfg);
  write_text(report, to_json(table).dump(2) + "\n");
  write_text(with_extension(report, ".csv"), crop_table_csv(table));
  std::cout << crop_table_csv(table);
  return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& image, const fs::path& json_path, double threshold,
              const std::string& depth_out) {
  const ParameterSet params = load_parameters(ckpt);
  const Model model(params.config);
  const Tensor rgb = read_ppm(image);
  if (rgb.width() != params.config.input_w || rgb.height() != params.config.input_h) {
    throw ShapeError("image is " + std::to_string(rgb.width()) + "x" + std::to_string(rgb.height()) +
                     ", model expects " + std::to_string(params.config.input_w) + "x" +
                     std::to_string(params.config.input_h));
  }
  const InferenceResult r = run_inference(model, params, rgb, threshold);
  nlohmann::json j;
  j["image"] = image.string();
  j["threshold"] = threshold;
  j["detections"] = detections_to_json(r.detections);
  j["correction"] = {{"k", r.correction.k}, {"n_o", r.correction.n_o}};
  write_text(json_path, j.dump(2) + "\n");
  if (!depth_out.empty()) write_depth_f32(depth_out, r.output.depth);
  std::printf("%zu detections, k = %.6f\n", r.detections.size(), r.correction.k);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jmod2: joint monocular depth and obstacle detection on synthetic scenes"};
  app.require_subcommand(1);

  std::string spec, out, data, config, ckpt, report, presets, correction = "both", image, json_out, depth_out;
  double threshold = 0.5;
  double iou_threshold = 0.5;
  bool corrected = false;

  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  gen->add_option("--spec", spec, "dataset spec (key = value)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--config", config, "training config (key = value)")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", ckpt, "checkpoint path")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--report", report, "JSON report path; a .csv is written next to it")->required();
  ev->add_option("--threshold", threshold, "detection confidence threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--iou", iou_threshold, "IOU threshold for a true positive")->check(CLI::Range(0.0, 1.0));
  ev->add_flag("--corrected", corrected, "apply the detector-driven scale correction before scoring depth");

  auto* cr = app.add_subcommand("crop-exp", "focal-length experiment over center crops");
  cr->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  cr->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  cr->add_option("--presets", presets, "comma-separated WxH list; defaults to the preset ladder of the model");
  cr->add_option("--correction", correction, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));
  cr->add_option("--report", report, "JSON report path; a .csv is written next to it")->required();
  cr->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));

  auto* inf = app.add_subcommand("infer", "run a checkpoint on one PPM image");
  inf->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  inf->add_option("--image", image)->required()->check(CLI::ExistingFile);
  inf->add_option("--json", json_out)->required();
  inf->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));
  inf->add_option("--depth-out", depth_out, "also write the predicted depth map (f32)");

  CLI11_PARSE(app, argc, argv);

  try {
    configure_threads_from_env();
    if (*gen) return cmd_generate(spec, out);
    if (*tr) return cmd_train(data, config, ckpt);
    if (*ev) return cmd_eval(ckpt, data, report, threshold, iou_threshold, corrected);
    if (*cr) return cmd_crop(ckpt, data, presets, correction, report, threshold);
    if (*inf) return cmd_infer(ckpt, image, json_out, threshold, depth_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
