#include "puffline/sessions.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace puffline {

Dbscan1dResult dbscan_1d(const std::vector<double>& points, double eps,
                         int min_pts) {
  if (eps < 0.0) throw std::invalid_argument("dbscan_1d: eps < 0");
  if (min_pts < 1) throw std::invalid_argument("dbscan_1d: min_pts < 1");
  const int n = static_cast<int>(points.size());
  for (int i = 1; i < n; ++i) {
    if (points[static_cast<std::size_t>(i)] <
        points[static_cast<std::size_t>(i - 1)]) {
      throw std::invalid_argument("dbscan_1d: points must be sorted");
    }
  }

  // Sorted input makes every eps-neighborhood a contiguous index range.
  auto neighborhood = [&](int i) {
    const double p = points[static_cast<std::size_t>(i)];
    const auto lo = std::lower_bound(points.begin(), points.end(), p - eps);
    const auto hi = std::upper_bound(points.begin(), points.end(), p + eps);
    return std::pair<int, int>{
        static_cast<int>(lo - points.begin()),
        static_cast<int>(hi - points.begin())};  // [lo, hi)
  };

  std::vector<bool> is_core(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    const auto [lo, hi] = neighborhood(i);
    is_core[static_cast<std::size_t>(i)] = (hi - lo) >= min_pts;
  }

  constexpr int kUnassigned = -1;
  std::vector<int> cluster_of(static_cast<std::size_t>(n), kUnassigned);
  Dbscan1dResult result;

  for (int seed = 0; seed < n; ++seed) {
    if (!is_core[static_cast<std::size_t>(seed)] ||
        cluster_of[static_cast<std::size_t>(seed)] != kUnassigned) {
      continue;
    }
    const int cluster_id = static_cast<int>(result.clusters.size());
    result.clusters.emplace_back();
    std::deque<int> frontier{seed};
    cluster_of[static_cast<std::size_t>(seed)] = cluster_id;
    while (!frontier.empty()) {
      const int core = frontier.front();
      frontier.pop_front();
      const auto [lo, hi] = neighborhood(core);
      for (int q = lo; q < hi; ++q) {
        if (cluster_of[static_cast<std::size_t>(q)] != kUnassigned) continue;
        cluster_of[static_cast<std::size_t>(q)] = cluster_id;
        if (is_core[static_cast<std::size_t>(q)]) frontier.push_back(q);
      }
    }
  }

  for (auto& c : result.clusters) c.clear();
  for (int i = 0; i < n; ++i) {
    const int c = cluster_of[static_cast<std::size_t>(i)];
    if (c == kUnassigned) {
      result.noise.push_back(i);
    } else {
      result.clusters[static_cast<std::size_t>(c)].push_back(i);
    }
  }
  return result;
}

SessionSet localize_sessions(const PuffSet& puffs,
                             const SessionParams& params) {
  std::vector<double> points = puffs.timestamps;
  std::sort(points.begin(), points.end());
  const Dbscan1dResult clustering =
      dbscan_1d(points, params.eps, params.min_pts);

  SessionSet out;
  out.intervals.reserve(clustering.clusters.size());
  for (const auto& cluster : clustering.clusters) {
    if (cluster.empty()) continue;
    out.intervals.push_back(
        {points[static_cast<std::size_t>(cluster.front())],
         points[static_cast<std::size_t>(cluster.back())]});
  }
  std::sort(out.intervals.begin(), out.intervals.end(),
            [](const Interval& a, const Interval& b) {
              return a.start < b.start;
            });
  return out;
}

}  // namespace puffline
