#pragma once

#include <vector>

#include "puffline/detect.hpp"
#include "puffline/types.hpp"

namespace puffline {

// Detected smoking sessions as sorted, non-overlapping [start, end] intervals.
struct SessionSet {
  std::vector<Interval> intervals;
};

struct Dbscan1dResult {
  std::vector<std::vector<int>> clusters;  // point indices, ascending
  std::vector<int> noise;
};

struct SessionParams {
  double eps = 250.0;  // neighborhood radius in seconds
  int min_pts = 4;     // neighbors within eps, the point itself included
};

// Classical DBSCAN restricted to the real line. Points must be sorted
// ascending. p is core iff |{q : |q - p| <= eps}| >= min_pts; clusters are the
// sets density-reachable from cores, expanded in ascending order so border
// points deterministically join the earliest cluster that reaches them.
Dbscan1dResult dbscan_1d(const std::vector<double>& points, double eps,
                         int min_pts);

// Clusters the detected puffs and maps every cluster to the interval spanned
// by its first and last timestamp. Noise puffs yield no session.
SessionSet localize_sessions(const PuffSet& puffs,
                             const SessionParams& params = {});

}  // namespace puffline
