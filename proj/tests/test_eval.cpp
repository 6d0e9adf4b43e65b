#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "puffline/eval.hpp"
#include "puffline/rng.hpp"

using namespace puffline;

TEST_CASE("strict puff matching counts first-in-interval only") {
  PuffSet det;
  det.timestamps = {2, 3, 20};
  const GtIntervals gt{{0, 5}, {10, 15}};
  const Confusion c = evaluate_puffs(det, gt);
  CHECK(c.tp == 1);
  CHECK(c.fp == 2);
  CHECK(c.fn == 1);
  CHECK_FALSE(c.tn.has_value());
}

TEST_CASE("no detections leaves every interval unmatched") {
  const Confusion c = evaluate_puffs({}, {{0, 1}, {2, 3}, {4, 5}});
  CHECK(c.tp == 0);
  CHECK(c.fp == 0);
  CHECK(c.fn == 3);
}

TEST_CASE("interval boundaries are inclusive") {
  PuffSet det;
  det.timestamps = {0.0, 5.0};
  const Confusion c = evaluate_puffs(det, {{0, 2}, {3, 5}});
  CHECK(c.tp == 2);
  CHECK(c.fp == 0);
}

TEST_CASE("evaluate_puffs matches the rule-replay oracle") {
  Rng rng(606);
  for (int trial = 0; trial < 1000; ++trial) {
    GtIntervals gt;
    double t = 0.0;
    const int n_gt = static_cast<int>(rng.uniform_index(12));
    for (int g = 0; g < n_gt; ++g) {
      t += rng.uniform(0.5, 10.0);
      const double start = t;
      t += rng.uniform(0.5, 8.0);
      gt.push_back({start, t});
    }
    PuffSet det;
    const int n_det = static_cast<int>(rng.uniform_index(25));
    for (int d = 0; d < n_det; ++d) {
      det.timestamps.push_back(rng.uniform(-5.0, t + 5.0));
    }
    std::sort(det.timestamps.begin(), det.timestamps.end());

    std::vector<std::pair<double, double>> gt_pairs;
    for (const auto& iv : gt) gt_pairs.emplace_back(iv.start, iv.end);
    const auto expected = oracle::event_eval_reference(det.timestamps, gt_pairs);
    const Confusion got = evaluate_puffs(det, gt);
    REQUIRE(got.tp == expected.tp);
    REQUIRE(got.fp == expected.fp);
    REQUIRE(got.fn == expected.fn);

    CHECK(got.tp + got.fn == static_cast<long>(gt.size()));
    CHECK(got.tp <= static_cast<long>(det.timestamps.size()));
  }
}

TEST_CASE("window confusion counts the 2x2 table") {
  const std::vector<int> same{+1, -1, +1, -1};
  const Confusion identical = window_confusion(same, same);
  CHECK(identical.fp == 0);
  CHECK(identical.fn == 0);
  CHECK(identical.tp == 2);
  REQUIRE(identical.tn.has_value());
  CHECK(*identical.tn == 2);

  const std::vector<int> all_neg{-1, -1, -1, -1};
  const std::vector<int> gt{+1, -1, +1, +1};
  const Confusion missed = window_confusion(all_neg, gt);
  CHECK(missed.tp == 0);
  CHECK(missed.fn == 3);

  CHECK_THROWS_AS(window_confusion({+1}, {+1, -1}), std::invalid_argument);

  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_index(200));
    std::vector<int> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(rng.uniform01() < 0.5 ? +1 : -1);
      b.push_back(rng.uniform01() < 0.5 ? +1 : -1);
    }
    const Confusion c = window_confusion(a, b);
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < n; ++i) {
      if (a[static_cast<std::size_t>(i)] > 0 && b[static_cast<std::size_t>(i)] > 0) ++tp;
      if (a[static_cast<std::size_t>(i)] > 0 && b[static_cast<std::size_t>(i)] < 0) ++fp;
      if (a[static_cast<std::size_t>(i)] < 0 && b[static_cast<std::size_t>(i)] > 0) ++fn;
      if (a[static_cast<std::size_t>(i)] < 0 && b[static_cast<std::size_t>(i)] < 0) ++tn;
    }
    CHECK(c.tp == tp);
    CHECK(c.fp == fp);
    CHECK(c.fn == fn);
    CHECK(*c.tn == tn);
  }
}

TEST_CASE("weighted accuracy formula and edge cases") {
  Confusion perfect{1, 0, 0, 10};
  CHECK(weighted_accuracy(perfect, 7.27) == doctest::Approx(1.0));

  Confusion all_missed{0, 0, 1, 0};
  CHECK(weighted_accuracy(all_missed, 3.0) == doctest::Approx(0.0));

  // w = 1 reduces to plain accuracy.
  Confusion mixed{3, 2, 1, 14};
  CHECK(weighted_accuracy(mixed, 1.0) ==
        doctest::Approx((3.0 + 14.0) / 20.0));

  Confusion no_tn{1, 1, 1, std::nullopt};
  CHECK_THROWS_AS(weighted_accuracy(no_tn, 7.27), std::invalid_argument);

  Confusion empty{0, 0, 0, 0};
  CHECK_THROWS_AS(weighted_accuracy(empty, 7.27), std::invalid_argument);
}

TEST_CASE("session midpoint matching") {
  SessionSet pred;
  pred.intervals = {{100, 200}};
  CHECK(evaluate_sessions(pred, {{90, 210}}).tp == 1);

  SessionSet off;
  off.intervals = {{0, 100}};  // midpoint 50
  const Confusion c = evaluate_sessions(off, {{60, 200}});
  CHECK(c.tp == 0);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
}

TEST_CASE("evaluate_sessions matches the rule-replay oracle") {
  Rng rng(707);
  for (int trial = 0; trial < 1000; ++trial) {
    GtIntervals gt;
    double t = 0.0;
    const int n_gt = static_cast<int>(rng.uniform_index(8));
    for (int g = 0; g < n_gt; ++g) {
      t += rng.uniform(1.0, 20.0);
      const double start = t;
      t += rng.uniform(1.0, 30.0);
      gt.push_back({start, t});
    }
    SessionSet pred;
    double s = -10.0;
    const int n_pred = static_cast<int>(rng.uniform_index(10));
    for (int p = 0; p < n_pred; ++p) {
      s += rng.uniform(0.5, 25.0);
      pred.intervals.push_back({s, s + rng.uniform(0.0, 20.0)});
    }

    std::vector<double> midpoints;
    for (const auto& iv : pred.intervals) {
      midpoints.push_back((iv.start + iv.end) / 2.0);
    }
    std::sort(midpoints.begin(), midpoints.end());
    std::vector<std::pair<double, double>> gt_pairs;
    for (const auto& iv : gt) gt_pairs.emplace_back(iv.start, iv.end);
    const auto expected = oracle::event_eval_reference(midpoints, gt_pairs);

    const Confusion got = evaluate_sessions(pred, gt);
    REQUIRE(got.tp == expected.tp);
    REQUIRE(got.fp == expected.fp);
    REQUIRE(got.fn == expected.fn);
  }
}

TEST_CASE("jaccard on interval unions") {
  const std::vector<Interval> a{{0, 10}};
  const std::vector<Interval> b{{5, 15}};
  CHECK(jaccard(a, b) == doctest::Approx(5.0 / 15.0).epsilon(1e-12));
  CHECK(jaccard(a, a) == doctest::Approx(1.0));
  CHECK(jaccard(a, {{20, 30}}) == doctest::Approx(0.0));
  CHECK(jaccard({}, {}) == doctest::Approx(1.0));
  CHECK(jaccard(a, {}) == doctest::Approx(0.0));
  CHECK(jaccard({}, b) == doctest::Approx(0.0));
}

TEST_CASE("jaccard is symmetric and split-invariant") {
  Rng rng(808);
  for (int trial = 0; trial < 300; ++trial) {
    auto random_intervals = [&rng]() {
      std::vector<Interval> out;
      double t = 0.0;
      const int n = static_cast<int>(rng.uniform_index(6));
      for (int i = 0; i < n; ++i) {
        t += rng.uniform(0.5, 10.0);
        const double start = t;
        t += rng.uniform(0.5, 10.0);
        out.push_back({start, t});
      }
      return out;
    };
    const auto a = random_intervals();
    const auto b = random_intervals();
    CHECK(jaccard(a, b) == doctest::Approx(jaccard(b, a)).epsilon(1e-12));

    // Splitting an interval into abutting halves changes nothing.
    if (!a.empty()) {
      std::vector<Interval> split;
      for (const auto& iv : a) {
        const double mid = (iv.start + iv.end) / 2.0;
        split.push_back({iv.start, mid});
        split.push_back({mid, iv.end});
      }
      CHECK(jaccard(split, b) == doctest::Approx(jaccard(a, b)).epsilon(1e-12));
    }
  }
}

TEST_CASE("prf reproduces the target F1 arithmetic") {
  // tp/(tp+fp) = 0.921 and tp/(tp+fn) = 0.811 exactly.
  Confusion ex1{746931, 64069, 174069, std::nullopt};
  const Prf p1 = prf(ex1);
  CHECK(p1.precision == doctest::Approx(0.921).epsilon(1e-12));
  CHECK(p1.recall == doctest::Approx(0.811).epsilon(1e-12));
  CHECK(std::abs(p1.f1 - 0.863) <= 0.0005);

  Confusion ex2{772551, 150449, 64449, std::nullopt};
  const Prf p2 = prf(ex2);
  CHECK(p2.precision == doctest::Approx(0.837).epsilon(1e-12));
  CHECK(p2.recall == doctest::Approx(0.923).epsilon(1e-12));
  CHECK(std::abs(p2.f1 - 0.878) <= 0.0005);
}

TEST_CASE("prf degenerate cases are flagged") {
  const Prf empty = prf(Confusion{0, 0, 0, std::nullopt});
  CHECK(empty.degenerate);
  CHECK(empty.f1 == 0.0);

  const Prf no_tp = prf(Confusion{0, 3, 4, std::nullopt});
  CHECK(no_tp.f1 == 0.0);

  Rng rng(909);
  for (int trial = 0; trial < 200; ++trial) {
    Confusion c{static_cast<long>(rng.uniform_index(50)),
                static_cast<long>(rng.uniform_index(50)),
                static_cast<long>(rng.uniform_index(50)), std::nullopt};
    const Prf p = prf(c);
    if (!p.degenerate) {
      CHECK(p.f1 <= std::min(p.precision, p.recall) + 1e-12);
      CHECK((p.f1 == 0.0) == (c.tp == 0));
    }
  }
}
