#include <random>

#include <doctest.h>

#include "jmod2/groundtruth.hpp"
#include "jmod2/inference.hpp"
#include "jmod2/metrics.hpp"
#include "jmod2/synthdata.hpp"

using namespace jmod2;

namespace {

const GridSpec kToyGrid{8, 5, 8};

Detection det_with(double x0, double y0, double x1, double y1, double m) {
  Detection d;
  d.box.x_min = x0;
  d.box.y_min = y0;
  d.box.x_max = x1;
  d.box.y_max = y1;
  d.box.mean_depth = m;
  d.confidence = 0.9;
  return d;
}

}  // namespace

TEST_CASE("decode of an empty grid is empty") {
  CHECK(decode_detections(DetectionGrid(kToyGrid), kToyGrid).empty());
}

TEST_CASE("threshold 1 drops everything below certainty") {
  DetectionGrid g(kToyGrid, 0.3);
  for (int i = 0; i < g.cells(); ++i) g.cell(i, kConfidence) = 0.999;
  CHECK(decode_detections(g, kToyGrid, 1.0).empty());
  CHECK(decode_detections(g, kToyGrid, 0.5).size() == 40);
}

TEST_CASE("raising the threshold never adds detections") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DetectionGrid g(kToyGrid);
  for (double& v : g.values) v = u(rng);
  std::size_t previous = decode_detections(g, kToyGrid, 0.0).size();
  CHECK(previous == 40);
  for (double t = 0.05; t <= 1.0; t += 0.05) {
    const std::size_t now = decode_detections(g, kToyGrid, t).size();
    CHECK(now <= previous);
    previous = now;
  }
}

TEST_CASE("decode converts units, clamps to the image and sorts by confidence") {
  DetectionGrid g(kToyGrid);
  g.at(0, 0, kConfidence) = 0.6;
  g.at(0, 0, kCenterX) = 0.0;
  g.at(0, 0, kCenterY) = 0.5;
  g.at(0, 0, kWidth) = 0.25;   // 16 px
  g.at(0, 0, kHeight) = 0.1;   // 4 px
  g.at(0, 0, kMean) = 0.5;
  g.at(0, 0, kVar) = 0.2;
  g.at(2, 3, kConfidence) = 0.95;
  const auto dets = decode_detections(g, kToyGrid);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].row == 2);
  CHECK(dets[0].col == 3);
  CHECK(dets[1].box.x_min == 0.0);  // centre 0, half width 8 clamped
  CHECK(dets[1].box.x_max == 8.0);
  CHECK(dets[1].box.y_min == 2.0);
  CHECK(dets[1].box.y_max == 6.0);
  CHECK(dets[1].box.mean_depth == doctest::Approx(10.0));
  CHECK(dets[1].box.var_depth == doctest::Approx(5.0));
}

TEST_CASE("correction hand example and fallback") {
  DepthMap depth(20, 10, 4.0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 10; x < 20; ++x) depth.at(x, y) = 6.0;
  }
  const std::vector<Detection> dets = {det_with(1, 1, 5, 5, 8.0), det_with(12, 2, 18, 9, 12.0)};
  const CorrectionResult r = correction_factor(dets, depth);
  CHECK(r.k == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.n_o == 2);
  for (std::size_t i = 0; i < depth.size(); ++i) CHECK(r.corrected.values[i] == doctest::Approx(2.0 * depth.values[i]));

  const CorrectionResult none = correction_factor({}, depth);
  CHECK(none.k == 1.0);
  CHECK(none.n_o == 0);
  CHECK(none.corrected == depth);
  depth.at(0, 0) = -1.0;
  CHECK_THROWS_AS(correction_factor(dets, depth), std::domain_error);
}

TEST_CASE("correction scales as 1/s with the depth map and is idempotent") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(1.0, 30.0);
  DepthMap depth(16, 12);
  for (double& v : depth.values) v = u(rng);
  const std::vector<Detection> dets = {det_with(0, 0, 6, 4, 7.0), det_with(8, 5, 15, 12, 9.0)};
  const double k = correction_factor(dets, depth).k;
  DepthMap scaled = depth;
  for (double& v : scaled.values) v *= 3.0;
  CHECK(correction_factor(dets, scaled).k == doctest::Approx(k / 3.0).epsilon(1e-12));

  std::vector<Detection> both = dets;
  for (auto& d : both) d.box.mean_depth *= 3.0;
  CHECK(correction_factor(both, scaled).k == doctest::Approx(k).epsilon(1e-12));

  const CorrectionResult once = correction_factor(dets, depth);
  CHECK(correction_factor(dets, once.corrected).k == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("box rectangles use pixel centres") {
  ObstacleBox b;
  b.x_min = 1.4;
  b.x_max = 3.6;
  b.y_min = 0.0;
  b.y_max = 2.0;
  const PixelRect r = pixel_rect(b, 10, 10);
  CHECK(r.x0 == 1);  // centre 1.5 inside
  CHECK(r.x1 == 4);  // centre 3.5 inside, 4.5 not
  CHECK(r.y0 == 0);
  CHECK(r.y1 == 2);
  b.x_min = 2.6;
  b.x_max = 2.9;  // covers no pixel centre: falls back to the centre pixel
  const PixelRect thin = pixel_rect(b, 10, 10);
  CHECK(thin.x0 == 2);
  CHECK(thin.x1 == 3);
}
