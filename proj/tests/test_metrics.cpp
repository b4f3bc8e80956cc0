#include <cmath>
#include <random>

#include <doctest.h>

#include "jmod2/metrics.hpp"
#include "oracles.hpp"

using namespace jmod2;

namespace {

ObstacleBox box(double x0, double y0, double x1, double y1, double m = 5.0, double v = 0.0) {
  ObstacleBox b;
  b.x_min = x0;
  b.y_min = y0;
  b.x_max = x1;
  b.y_max = y1;
  b.mean_depth = m;
  b.var_depth = v;
  return b;
}

Detection det(const ObstacleBox& b, int row = 0, int col = 0) {
  Detection d;
  d.box = b;
  d.confidence = 0.8;
  d.row = row;
  d.col = col;
  return d;
}

}  // namespace

TEST_CASE("rmse and the scale-invariant metric") {
  DepthMap a(4, 2, 2.0), b(4, 2, 2.0);
  b.at(0, 0) = 4.0;
  CHECK(rmse_linear(a, b) == doctest::Approx(std::sqrt(4.0 / 8.0)));
  DepthMap s = a;
  for (double& v : s.values) v *= 7.0;
  CHECK(sc_inv_rmse(s, b) == doctest::Approx(sc_inv_rmse(a, b)).epsilon(1e-12));
  CHECK(sc_inv_rmse(a, b) == doctest::Approx(oracle::scale_invariant(a.values, b.values, 1.0)));
  CHECK(sc_inv_rmse(s, s) == 0.0);
  CHECK_THROWS_AS(rmse_linear(a, DepthMap(2, 2)), ShapeError);
}

TEST_CASE("iou of simple boxes") {
  CHECK(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0);
  CHECK(iou(box(0, 0, 2, 2), box(2, 0, 4, 2)) == 0.0);
  CHECK(iou(box(0, 0, 2, 2), box(1, 0, 3, 2)) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("identical lists match perfectly; disjoint lists do not match") {
  const std::vector<ObstacleBox> gts = {box(0, 0, 4, 4), box(10, 10, 14, 16), box(20, 0, 30, 8)};
  std::vector<Detection> dets;
  for (const auto& g : gts) dets.push_back(det(g));
  MetricsAccumulator acc;
  EvalSample s{DepthMap(32, 16, 5.0), DepthMap(32, 16, 5.0), Mask(32, 16, 0), gts, dets};
  acc.add(s);
  const MetricsReport r = acc.report();
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.n_matched == 3);
  CHECK(*r.iou_mean == 1.0);
  CHECK(*r.det_obs_rmse_mean == 0.0);

  const std::vector<Detection> far = {det(box(40, 40, 44, 44))};
  CHECK(match_detections(far, gts).pairs.empty());
}

TEST_CASE("greedy matching equals the lexicographic oracle on random instances") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int non_trivial = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ObstacleBox> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 3; ++i) {
      const double x = 10 * u(rng), y = 10 * u(rng);
      gts.push_back(box(x, y, x + 4 + 4 * u(rng), y + 4 + 4 * u(rng)));
    }
    for (int i = 0; i < 3; ++i) {
      const ObstacleBox& g = gts[i];
      const double jx = 2 * u(rng) - 1, jy = 2 * u(rng) - 1;
      dets.push_back(det(box(g.x_min + jx, g.y_min + jy, g.x_max + jx + u(rng), g.y_max + jy), 0, i));
    }
    std::vector<std::vector<double>> table(3, std::vector<double>(3));
    for (int d = 0; d < 3; ++d) {
      for (int g = 0; g < 3; ++g) table[d][g] = oracle::box_iou(dets[d].box, gts[g]);
    }
    const auto all = oracle::all_assignments(table, 3, 0.5);
    const auto best = oracle::lexicographic_best(all);
    const Matching m = match_detections(dets, gts, 0.5);
    REQUIRE(m.pairs.size() == best.det_gt.size());
    for (std::size_t k = 0; k < m.pairs.size(); ++k) {
      CHECK(m.pairs[k].det == best.det_gt[k].first);
      CHECK(m.pairs[k].gt == best.det_gt[k].second);
    }
    if (m.pairs.size() >= 2) ++non_trivial;
  }
  CHECK(non_trivial > 50);
}

TEST_CASE("greedy is not max-weight: a documented counterexample") {
  // d0-g0 is the single best pair; taking it leaves d1 with nothing above the
  // threshold, while pairing d0-g1 and d1-g0 would give a larger IOU total.
  const std::vector<ObstacleBox> gts = {box(0, 0, 10, 10), box(3, 0, 13, 10)};
  const std::vector<Detection> dets = {det(box(1, 0, 11, 10), 0, 0), det(box(-3, 0, 7, 10), 0, 1)};
  std::vector<std::vector<double>> table(2, std::vector<double>(2));
  for (int d = 0; d < 2; ++d) {
    for (int g = 0; g < 2; ++g) table[d][g] = oracle::box_iou(dets[d].box, gts[g]);
  }
  const auto all = oracle::all_assignments(table, 2, 0.5);
  const Matching m = match_detections(dets, gts, 0.5);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].det == 0);
  CHECK(m.pairs[0].gt == 0);
  CHECK(m.pairs[0].iou < oracle::max_weight(all).total());
  CHECK(oracle::max_weight(all).det_gt.size() == 2);
  CHECK(oracle::lexicographic_best(all).det_gt.size() == 1);
}

TEST_CASE("ties go to the nearer centre") {
  const std::vector<ObstacleBox> gts = {box(0, 0, 10, 10)};
  // Same IOU (0.8 by area), centres at different distances.
  const std::vector<Detection> dets = {det(box(0, 0, 8, 10), 0, 0), det(box(1, 0, 9, 10), 0, 1)};
  const Matching m = match_detections(dets, gts, 0.5);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].det == 1);
}

TEST_CASE("precision and recall conventions") {
  MetricsAccumulator acc;
  const MetricsReport empty = acc.report();
  CHECK(empty.precision == 1.0);
  CHECK(empty.recall == 1.0);
  CHECK_FALSE(empty.iou_mean.has_value());

  EvalSample s{DepthMap(16, 16, 5.0), DepthMap(16, 16, 5.0), Mask(16, 16, 0), {box(0, 0, 4, 4)}, {}};
  acc.add(s);
  CHECK(acc.report().recall == 0.0);
  CHECK(acc.report().precision == 1.0);
  CHECK(acc.report().n_matched <= std::min(acc.report().n_det, acc.report().n_gt));
}

TEST_CASE("pooled metrics are micro-averaged and thread-order independent") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(1.0, 30.0);
  std::vector<EvalSample> samples;
  for (int i = 0; i < 6; ++i) {
    EvalSample s{DepthMap(8, 8), DepthMap(8, 8), Mask(8, 8, 0), {}, {}};
    for (double& v : s.pred.values) v = u(rng);
    for (double& v : s.gt.values) v = u(rng);
    if (i % 2 == 0) {
      ObstacleBox g = box(0, 0, 4, 4, u(rng), 1.0);
      s.gt_boxes.push_back(g);
      g.mean_depth += 1.0;
      s.detections.push_back(det(g));
    }
    samples.push_back(s);
  }
  const MetricsReport r = evaluate(samples);
  double sq = 0.0;
  double sc = 0.0;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.pred.size(); ++i) sq += std::pow(s.pred.values[i] - s.gt.values[i], 2);
    sc += sc_inv_rmse(s.pred, s.gt);
  }
  CHECK(r.rmse_linear == doctest::Approx(std::sqrt(sq / (6 * 64))));
  CHECK(r.sc_inv_rmse == doctest::Approx(sc / 6));
  CHECK(*r.det_obs_rmse_mean == doctest::Approx(1.0));
  CHECK(r.n_gt == 3);
  CHECK(r.recall == 1.0);

  MetricsAccumulator a, b;
  for (int i = 0; i < 3; ++i) a.add(samples[i]);
  for (int i = 3; i < 6; ++i) b.add(samples[i]);
  a.merge(b);
  CHECK(a.report().rmse_linear == doctest::Approx(r.rmse_linear).epsilon(1e-14));
}

TEST_CASE("obstacle depth statistics use the obstacle's own pixels") {
  DepthMap pred(4, 4, 10.0);
  Mask seg(4, 4, 0);
  ObstacleBox g = box(0, 0, 2, 2, 4.0, 0.0);
  g.pixels = {0, 1, 4};  // three of the four rectangle pixels
  pred.values[0] = pred.values[1] = pred.values[4] = 5.0;
  const ObstacleBox boxes[] = {g};
  const StatsError e = obstacle_depth_stats_error(boxes, pred, seg);
  CHECK(*e.rmse_mean == doctest::Approx(1.0));
  CHECK(*e.rmse_var == doctest::Approx(0.0));
}
