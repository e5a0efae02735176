#include <cmath>
#include <random>

#include "doctest.h"
#include "nexting/common.hpp"
#include "nexting/eval.hpp"
#include "nexting/oracle.hpp"
#include "nexting/sim.hpp"
#include "support.hpp"

using namespace nexting;

TEST_CASE("normalized RMSE examples") {
  const std::vector<double> ret(10, 3.0);
  SUBCASE("perfect predictions") {
    const auto c = normalized_rmse(ret, ret, 0.9, 4);
    REQUIRE(c.points.size() == 3);
    for (const auto& p : c.points) CHECK(p.normalizedRmse == 0.0);
  }
  SUBCASE("gamma 0.9875 divides by 80") {
    std::vector<double> pred(10);
    for (std::size_t i = 0; i < 10; ++i) pred[i] = ret[i] + (i % 2 ? 8.0 : -8.0);
    const auto c = normalized_rmse(pred, ret, 0.9875, 10);
    REQUIRE(c.points.size() == 1);
    CHECK(c.points[0].normalizedRmse == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("zero predictor, gamma 0.8") {
    const std::vector<double> zero(10, 0.0);
    const auto c = normalized_rmse(zero, ret, 0.8, 5);
    for (const auto& p : c.points) CHECK(p.normalizedRmse == doctest::Approx(3.0 / 5.0).epsilon(1e-12));
  }
  SUBCASE("gamma 0 leaves the RMSE unscaled") {
    const std::vector<double> zero(10, 0.0);
    CHECK(normalized_rmse(zero, ret, 0.0, 10).points[0].normalizedRmse == doctest::Approx(3.0));
  }
}

TEST_CASE("normalized RMSE bins cover the span, last bin partial") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> pred(2500), ret(2500);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = nd(rng);
    ret[i] = nd(rng);
  }
  const auto c = normalized_rmse(pred, ret, 0.95, 1000);
  REQUIRE(c.points.size() == 3);
  CHECK(c.binSize == 1000);
  CHECK(c.gamma == 0.95);
  for (std::size_t b = 0; b < 3; ++b) {
    CHECK(c.points[b].bin == b);
    const std::size_t lo = b * 1000, hi = std::min<std::size_t>(lo + 1000, 2500);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += (pred[i] - ret[i]) * (pred[i] - ret[i]);
    CHECK(c.points[b].normalizedRmse == doctest::Approx(std::sqrt(s / double(hi - lo)) * 0.05).epsilon(1e-12));
    CHECK(c.points[b].normalizedRmse >= 0.0);
  }
}

TEST_CASE("property: normalization removes the timescale") {
  // A signal with relative error e against the return 1/(1-gamma) gives
  // the same normalized RMSE at every gamma.
  for (double e : {0.01, 0.2}) {
    double first = -1.0;
    for (double gamma : {0.8, 0.95, 0.9875}) {
      const double scale = 1.0 / (1.0 - gamma);
      const std::vector<double> ret(50, scale), pred(50, scale * (1.0 + e));
      const double v = normalized_rmse(pred, ret, gamma, 50).points[0].normalizedRmse;
      if (first < 0.0) first = v;
      CHECK(v == doctest::Approx(first).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalized RMSE errors") {
  const std::vector<double> a(5, 0.0), b(4, 0.0);
  CHECK_THROWS_AS(normalized_rmse(a, b, 0.5, 2), InputError);
  CHECK_THROWS_AS(normalized_rmse(a, a, 0.5, 0), InputError);
  CHECK_THROWS_AS(normalized_rmse({}, {}, 0.5, 2), InputError);
  CHECK_THROWS_AS(normalized_rmse_span(a, a, 0.5, 3, 3), InputError);
  CHECK_THROWS_AS(normalized_rmse_span(a, a, 0.5, 0, 6), InputError);
}

TEST_CASE("detect_events examples") {
  CHECK(detect_events(std::vector<double>(100, 0.5), 0.99, 10).empty());

  std::vector<double> square(4000, 0.0);
  for (std::size_t t = 0; t < square.size(); ++t) square[t] = (t % 400) >= 300 ? 1.0 : 0.2;
  const auto on = detect_events(square, 0.99, 100);
  REQUIRE(on.size() == 10);
  for (std::size_t i = 0; i < on.size(); ++i) CHECK(on[i] == 300 + 400 * i);

  // A dip shorter than the refractory period does not start a new event.
  std::vector<double> flicker(300, 0.0);
  for (std::size_t t = 150; t < 200; ++t) flicker[t] = 1.0;
  flicker[170] = 0.5;
  CHECK(detect_events(flicker, 0.99, 100) == std::vector<std::size_t>{150});
  // Saturated from the start: no onset without a preceding quiet stretch.
  CHECK(detect_events(std::vector<double>(300, 1.0), 0.99, 100).empty());
}

TEST_CASE("property: onsets are sorted and separated by the refractory period") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  std::vector<double> s(20000);
  for (auto& v : s) v = u(rng) < 0.02 ? 1.0 : 0.1;
  for (std::size_t refractory : {1, 10, 50}) {
    const auto on = detect_events(s, 0.99, refractory);
    for (std::size_t i = 1; i < on.size(); ++i) CHECK(on[i] - on[i - 1] > refractory);
    for (auto o : on) {
      CHECK(s[o] >= 0.99);
      for (std::size_t k = 1; k <= refractory; ++k) REQUIRE(s[o - k] < 0.99);
    }
  }
}

TEST_CASE("simulator light channel gives one event per loop") {
  SimParams p;
  p.seed = 7;
  const auto run = simulate(p, 45000);
  std::vector<double> light;
  for (const auto& f : run.frames) light.push_back(f.channels[channel::Light]);
  const auto on = detect_events(light, 0.99, 100);
  // Nominal loop length is 400 steps; pauses remove a few loops.
  const double loops = 45000.0 / 400.0;
  CHECK(static_cast<double>(on.size()) > 0.7 * loops);
  CHECK(static_cast<double>(on.size()) < 1.3 * loops);
}

TEST_CASE("align_events examples") {
  const EventWindow w{2, 2};
  SUBCASE("single event equals its raw window") {
    const std::vector<double> s{0, 1, 2, 3, 4, 5, 6, 7};
    const std::vector<std::span<const double>> series{s};
    const auto avg = align_events(std::vector<std::size_t>{4}, series, w);
    CHECK(avg.eventCount == 1);
    CHECK(avg.means[0] == std::vector<double>{2, 3, 4, 5, 6});
    CHECK(avg.at(0, -2) == 2.0);
    CHECK(avg.at(0, 2) == 6.0);
    CHECK_THROWS_AS(avg.at(0, 3), InputError);
  }
  SUBCASE("mirror-image events average to the midpoint") {
    const std::vector<double> s{0, 1, 2, 3, 4, 4, 3, 2, 1, 0};
    const std::vector<std::span<const double>> series{s};
    const auto avg = align_events(std::vector<std::size_t>{2, 7}, series, w);
    CHECK(avg.eventCount == 2);
    for (std::size_t i = 0; i < 5; ++i) CHECK(avg.means[0][i] == 2.0);
  }
  SUBCASE("events without room are dropped and counted") {
    const std::vector<double> s(10, 1.0);
    const std::vector<std::span<const double>> series{s, s};
    const auto avg = align_events(std::vector<std::size_t>{1, 5, 8}, series, w);
    CHECK(avg.eventCount == 1);
    CHECK(avg.droppedCount == 2);
    CHECK(avg.means.size() == 2);
    CHECK(avg.means[1].size() == w.length());
    CHECK_THROWS_AS(align_events(std::vector<std::size_t>{0, 9}, series, w), InputError);
  }
}

TEST_CASE("ideal 8 s light return rises before saturation") {
  SimParams p;
  p.seed = 7;
  const auto run = simulate(p, 30000);
  std::vector<double> light;
  for (const auto& f : run.frames) light.push_back(f.channels[channel::Light]);
  const auto G = compute_returns(light, std::vector<double>(light.size(), 0.9875));
  const auto on = detect_events(light, 0.99, 100);
  const std::vector<std::span<const double>> series{std::span<const double>(light).first(G.size()), G.values};
  const auto avg = align_events(on, series, EventWindow{100, 100});
  CHECK(avg.eventCount > 50);
  CHECK(avg.at(1, -20) > avg.at(1, -80));
  CHECK(avg.at(0, 0) >= 0.99);
}

TEST_CASE("CSV exports") {
  testsupport::TempDir dir("eval");
  LearningCurve c{1000, 0.5, {{0, 0.25}, {1, 0.125}}};
  write_curve_csv(dir / "c.csv", c);
  CHECK(read_text_file(dir / "c.csv") == "bin,rmse_normalized\n0,0.25\n1,0.125\n");

  const std::vector<double> s{0, 1, 2}, r{3, 4, 5}, q{6, 7, 8};
  const std::vector<std::span<const double>> three{s, r, q};
  const auto avg = align_events(std::vector<std::size_t>{1}, three, EventWindow{1, 1});
  write_aligned_csv(dir / "a.csv", avg);
  CHECK(read_text_file(dir / "a.csv") == "offset,signal,return,prediction\n-1,0,3,6\n0,1,4,7\n1,2,5,8\n");
  const std::vector<std::span<const double>> two{s, r};
  CHECK_THROWS_AS(write_aligned_csv(dir / "b.csv", align_events(std::vector<std::size_t>{1}, two, EventWindow{1, 1})),
                  InputError);
}
