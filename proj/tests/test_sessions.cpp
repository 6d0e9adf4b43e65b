#include "doctest.h"

#include <algorithm>

#include "oracles.hpp"
#include "puffline/rng.hpp"
#include "puffline/sessions.hpp"

using namespace puffline;

TEST_CASE("four mutually close points form one cluster") {
  const auto result = dbscan_1d({0, 10, 20, 30}, 250.0, 4);
  REQUIRE(result.clusters.size() == 1);
  CHECK(result.clusters[0] == std::vector<int>{0, 1, 2, 3});
  CHECK(result.noise.empty());
}

TEST_CASE("fewer points than min_pts are all noise") {
  const auto result = dbscan_1d({0, 10, 20}, 250.0, 4);
  CHECK(result.clusters.empty());
  CHECK(result.noise == std::vector<int>{0, 1, 2});
}

TEST_CASE("dbscan_1d requires sorted input") {
  CHECK_THROWS_AS(dbscan_1d({5, 1, 9}, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(dbscan_1d({0, 1}, -1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(dbscan_1d({0, 1}, 1.0, 0), std::invalid_argument);
}

TEST_CASE("dbscan_1d matches the density-reachability oracle") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.uniform_index(201));
    std::vector<double> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = rng.uniform(0.0, 100.0);
    if (rng.uniform01() < 0.3) {
      // Duplicates stress the tie handling.
      for (std::size_t i = 1; i < pts.size(); i += 3) pts[i] = pts[i - 1];
    }
    std::sort(pts.begin(), pts.end());
    const double eps = rng.uniform(0.1, 20.0);
    const int min_pts = 1 + static_cast<int>(rng.uniform_index(8));

    const auto got = dbscan_1d(pts, eps, min_pts);
    const auto expected = oracle::dbscan_reference(pts, eps, min_pts);
    REQUIRE(got.clusters == expected.clusters);
    REQUIRE(got.noise == expected.noise);
  }
}

TEST_CASE("localize_sessions spans each cluster with min and max") {
  PuffSet puffs;
  puffs.timestamps = {100, 200, 300, 400};
  const SessionSet sessions = localize_sessions(puffs);
  REQUIRE(sessions.intervals.size() == 1);
  CHECK(sessions.intervals[0].start == doctest::Approx(100.0));
  CHECK(sessions.intervals[0].end == doctest::Approx(400.0));
}

TEST_CASE("empty puff set yields no sessions") {
  CHECK(localize_sessions(PuffSet{}).intervals.empty());
}

TEST_CASE("two well-separated groups become two sessions") {
  PuffSet puffs;
  for (int i = 0; i < 5; ++i) puffs.timestamps.push_back(1000.0 + 60.0 * i);
  for (int i = 0; i < 5; ++i) puffs.timestamps.push_back(2240.0 + 60.0 * i);
  const SessionSet sessions = localize_sessions(puffs);
  REQUIRE(sessions.intervals.size() == 2);
  CHECK(sessions.intervals[0].start == doctest::Approx(1000.0));
  CHECK(sessions.intervals[0].end == doctest::Approx(1240.0));
  CHECK(sessions.intervals[1].start == doctest::Approx(2240.0));
  CHECK(sessions.intervals[1].end == doctest::Approx(2480.0));

  // Matches the oracle partition.
  std::vector<double> pts = puffs.timestamps;
  const auto expected = oracle::dbscan_reference(pts, 250.0, 4);
  CHECK(expected.clusters.size() == 2);
}

TEST_CASE("session properties on random puff sets") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    PuffSet puffs;
    const int n = static_cast<int>(rng.uniform_index(60));
    for (int i = 0; i < n; ++i) {
      puffs.timestamps.push_back(rng.uniform(0.0, 5000.0));
    }
    SessionParams params;
    params.eps = rng.uniform(10.0, 400.0);
    params.min_pts = 1 + static_cast<int>(rng.uniform_index(6));
    const SessionSet sessions = localize_sessions(puffs, params);

    // Sorted and non-overlapping intervals.
    for (std::size_t i = 0; i < sessions.intervals.size(); ++i) {
      CHECK(sessions.intervals[i].start <= sessions.intervals[i].end);
      if (i > 0) {
        CHECK(sessions.intervals[i].start > sessions.intervals[i - 1].end);
      }
    }

    // Every clustered puff lies inside exactly one interval.
    std::vector<double> sorted = puffs.timestamps;
    std::sort(sorted.begin(), sorted.end());
    const auto oracle_result =
        oracle::dbscan_reference(sorted, params.eps, params.min_pts);
    std::vector<bool> clustered(sorted.size(), false);
    for (const auto& c : oracle_result.clusters) {
      for (int idx : c) clustered[static_cast<std::size_t>(idx)] = true;
    }
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      int containing = 0;
      for (const auto& iv : sessions.intervals) {
        if (sorted[i] >= iv.start && sorted[i] <= iv.end) ++containing;
      }
      if (clustered[i]) {
        CHECK(containing == 1);
      }
    }

    // Permutation invariance.
    PuffSet shuffled = puffs;
    for (std::size_t i = shuffled.timestamps.size(); i > 1; --i) {
      std::swap(shuffled.timestamps[i - 1],
                shuffled.timestamps[rng.uniform_index(i)]);
    }
    const SessionSet again = localize_sessions(shuffled, params);
    REQUIRE(again.intervals.size() == sessions.intervals.size());
    for (std::size_t i = 0; i < again.intervals.size(); ++i) {
      CHECK(again.intervals[i].start == sessions.intervals[i].start);
      CHECK(again.intervals[i].end == sessions.intervals[i].end);
    }
  }
}
