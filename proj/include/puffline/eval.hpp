#pragma once

#include <optional>
#include <vector>

#include "puffline/sessions.hpp"
#include "puffline/types.hpp"

namespace puffline {

// tn is absent for the interval-level schemes, which have no notion of a
// negative instance.
struct Confusion {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  std::optional<long> tn;

  Confusion& operator+=(const Confusion& other);
};

// Sorted, non-overlapping ground-truth intervals.
using GtIntervals = std::vector<Interval>;

// Strict event matching: the first detection inside a GT interval is a TP,
// every later one in the same interval an FP, detections outside any interval
// are FPs, and unmatched intervals are FNs. Boundaries are inclusive.
Confusion evaluate_puffs(const PuffSet& detections, const GtIntervals& gt);

// Standard 2x2 window-level counts with +1 as the positive class.
Confusion window_confusion(const std::vector<int>& pred_labels,
                           const std::vector<int>& gt_labels);

// (TP * w + TN) / ((TP + FN) * w + FP + TN).
double weighted_accuracy(const Confusion& c, double w);

// A predicted session matches a GT interval iff its midpoint lies inside;
// first match per interval is a TP, repeats are FPs, as for puffs.
Confusion evaluate_sessions(const SessionSet& pred, const GtIntervals& gt);

// Measure of intersection over measure of union of the two interval unions.
// Both empty: 1.0; exactly one empty: 0.0.
double jaccard(const SessionSet& pred, const GtIntervals& gt);
double jaccard(const std::vector<Interval>& a, const std::vector<Interval>& b);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // a zero denominator was coerced to 0
};

Prf prf(const Confusion& c);

}  // namespace puffline
