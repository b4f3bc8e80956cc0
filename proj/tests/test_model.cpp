#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "jmod2/dataset.hpp"
#include "jmod2/harness.hpp"
#include "jmod2/image_io.hpp"
#include "jmod2/model.hpp"
#include "oracles.hpp"

using namespace jmod2;

namespace {

Tensor random_image(int w, int h, unsigned seed) {
  Tensor t(3, h, w);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::vector<std::size_t> indices_in(const ParameterSet& p, Branch b) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < p.scalar_count(); ++i) {
    if (p.scalar_branch(i) == b) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("toy and full shape contracts") {
  const ModelConfig toy = ModelConfig::toy(4);
  const Model model(toy);
  const auto params = init_parameters(toy, 1);
  const ModelOutput out = model.forward(params, random_image(64, 40, 1));
  CHECK(out.depth.width == 64);
  CHECK(out.depth.height == 40);
  CHECK(out.detections.cells_x == 8);
  CHECK(out.detections.cells_y == 5);
  CHECK(out.detections.values.size() == 5 * 8 * 7);
  CHECK_THROWS_AS(model.forward(params, random_image(32, 20, 1)), ShapeError);

  const ModelConfig full = ModelConfig::full(2);
  CHECK(full.input_w == 256);
  CHECK(full.input_h == 160);
  CHECK(full.grid.cell_px == 32);
  const ModelOutput big = Model(full).forward(init_parameters(full, 1), random_image(256, 160, 2));
  CHECK(big.depth.width == 256);
  CHECK(big.detections.values.size() == 5 * 8 * 7);
}

TEST_CASE("layer counts per branch") {
  const Model toy(ModelConfig::toy(4));
  const Model full(ModelConfig::full(2));
  auto count = [](const Model& m, Branch b) {
    int n = 0;
    for (const auto& l : m.layer_shapes()) n += l.branch == b;
    return n;
  };
  CHECK(count(full, Branch::encoder) == 10);
  CHECK(count(full, Branch::depth) == 5);
  CHECK(count(full, Branch::detection) == 9);
  CHECK(count(toy, Branch::encoder) == 6);
  CHECK(count(toy, Branch::depth) == 3);
  CHECK(count(toy, Branch::detection) == 9);
}

TEST_CASE("outputs stay within their activation ranges") {
  const ModelConfig cfg = ModelConfig::toy(4);
  const Model model(cfg);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    // Alternate between fresh inits and blown-up weights to reach the clamps.
    auto params = init_parameters(cfg, trial);
    if (trial % 2 == 1) {
      for (std::size_t i = 0; i < params.scalar_count(); ++i) params.scalar(i) *= 4.0;
    }
    const ModelOutput out = model.forward(params, random_image(64, 40, trial));
    for (double d : out.depth.values) {
      REQUIRE(d > 0.0);
      REQUIRE(d <= 40.0);
    }
    for (double v : out.detections.values) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("initialisation is deterministic and Glorot bounded") {
  const ModelConfig cfg = ModelConfig::toy(4);
  const auto a = init_parameters(cfg, 42);
  const auto b = init_parameters(cfg, 42);
  const auto c = init_parameters(cfg, 0);
  bool differs = false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    CHECK(a.layers[i].weights == b.layers[i].weights);
    differs = differs || a.layers[i].weights != c.layers[i].weights;
    const auto& l = a.layers[i];
    const double fan = static_cast<double>(l.kernel * l.kernel);
    const double bound = std::sqrt(6.0 / (l.in_channels * fan + l.out_channels * fan));
    for (double w : l.weights) CHECK(std::abs(w) <= bound);
  }
  CHECK(differs);
  CHECK(a.layers.back().bias[kConfidence] == doctest::Approx(std::log(kConfidencePrior / (1 - kConfidencePrior))));
}

TEST_CASE("depth head mapping") {
  CHECK(depth_from_logit(kDepthLogitShift) == doctest::Approx(kDepthFloorM + kDepthUnitM * std::log(2.0)).epsilon(1e-12));
  CHECK(depth_from_logit(100.0) == 40.0);
  CHECK(depth_from_logit(-50.0) > 0.0);
}

TEST_CASE("parameters survive a save/load roundtrip") {
  const ModelConfig cfg = ModelConfig::toy(3);
  auto params = init_parameters(cfg, 9);
  params.scalar(5) = 1.0 / 3.0;
  const auto path = std::filesystem::temp_directory_path() / "jmod2_test_params.bin";
  save_parameters(params, path);
  const ParameterSet back = load_parameters(path, cfg);
  CHECK(back.seed == 9);
  CHECK(back.config == cfg);
  for (std::size_t i = 0; i < params.scalar_count(); ++i) CHECK(back.scalar(i) == params.scalar(i));
  CHECK_THROWS_AS(load_parameters(path, ModelConfig::toy(4)), std::invalid_argument);

  {
    std::ofstream corrupt(path, std::ios::binary | std::ios::app);
    corrupt << "x";
  }
  CHECK_THROWS_AS(load_parameters(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_parameters(path), IoError);
  std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("analytic parameter gradients match central differences") {
  const ModelConfig cfg = ModelConfig::toy(2);
  const Model model(cfg);
  DatasetSpec spec;
  spec.num_samples = 1;
  spec.rng_seed = 3;
  const auto samples = generate_samples(spec);
  const TrainingSample ts = make_training_sample(samples[0], cfg.grid);
  auto params = init_parameters(cfg, 5);
  LossWeights w;
  w.depth_grad_weight = 0.1;

  ParameterSet grads = params.zeros_like();
  accumulate_sample_gradient(model, params, ts, w, 1.0, grads);
  auto loss = [&] { return total_loss(model.forward(params, ts.sample.rgb), ts.targets, w).total; };

  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, params.scalar_count() - 1);
  for (int k = 0; k < 30; ++k) {
    const std::size_t i = pick(rng);
    const double fd = oracle::central_difference(loss, params.scalar(i), 1e-5);
    CHECK(oracle::relative_error(fd, grads.scalar(i), 1e-7) < 1e-4);
  }
}

TEST_CASE("branches only see their own parameters") {
  const ModelConfig cfg = ModelConfig::toy(3);
  const Model model(cfg);
  const Tensor img = random_image(64, 40, 4);
  const auto base = init_parameters(cfg, 2);
  const ModelOutput ref = model.forward(base, img);

  auto perturbed = base;
  for (std::size_t i : indices_in(base, Branch::detection)) perturbed.scalar(i) += 0.05;
  ModelOutput out = model.forward(perturbed, img);
  CHECK(out.depth == ref.depth);
  CHECK(out.detections.values != ref.detections.values);

  perturbed = base;
  for (std::size_t i : indices_in(base, Branch::depth)) perturbed.scalar(i) += 0.05;
  out = model.forward(perturbed, img);
  CHECK(out.detections.values == ref.detections.values);
  CHECK_FALSE(out.depth == ref.depth);

  perturbed = base;
  for (std::size_t i : indices_in(base, Branch::encoder)) perturbed.scalar(i) += 0.05;
  out = model.forward(perturbed, img);
  CHECK(out.detections.values != ref.detections.values);
  CHECK_FALSE(out.depth == ref.depth);
}

TEST_CASE("parameter set arithmetic") {
  const ModelConfig cfg = ModelConfig::toy(2);
  auto a = init_parameters(cfg, 1);
  const auto b = init_parameters(cfg, 2);
  const double a0 = a.scalar(0);
  a.add_scaled(b, 2.0);
  CHECK(a.scalar(0) == doctest::Approx(a0 + 2.0 * b.scalar(0)));
  auto z = a.zeros_like();
  for (std::size_t i = 0; i < z.scalar_count(); ++i) REQUIRE(z.scalar(i) == 0.0);
  CHECK_THROWS_AS(a.add_scaled(init_parameters(ModelConfig::toy(3), 1), 1.0), ShapeError);
  CHECK(z.scalar_count() == a.scalar_count());
}
