#pragma once

#include <vector>

#include "puffline/net.hpp"
#include "puffline/types.hpp"
#include "puffline/windows.hpp"

namespace puffline {

// Per-window puff probabilities for one recording; end_epochs_s holds the
// right-edge timestamps, spaced by step_s.
struct ProbabilityTrace {
  std::vector<double> probs;
  std::vector<double> end_epochs_s;
  double step_s = 0.5;
};

// Ordered timestamps of detected puffs.
struct PuffSet {
  std::vector<double> timestamps;
};

struct DetectParams {
  double lambda_p = 0.8;
  int min_distance = 10;  // trace samples between surviving peaks
  // Paper order: maxima search with the distance constraint, then threshold.
  // When true the threshold is applied before conflict resolution instead.
  bool threshold_first = false;
};

// Slides the standard window over a preprocessed recording and forwards every
// window with training disabled.
ProbabilityTrace predict_recording(const PuffModel& model, const Recording& rec,
                                   double win_len_s = 4.5, double step_s = 0.5);

// Local-maxima candidates (plateaus take their first index; boundary samples
// qualify against their single neighbor), greedy suppression keeping higher
// peaks first when two candidates are closer than min_distance, then the
// lambda_p threshold.
PuffSet detect_puffs(const ProbabilityTrace& trace,
                     const DetectParams& params = {});

// Candidate local maxima indices before suppression; exposed for tests.
std::vector<int> local_maxima(const std::vector<double>& values);

}  // namespace puffline
