#include "puffline/detect.hpp"

#include <algorithm>
#include <stdexcept>

namespace puffline {

ProbabilityTrace predict_recording(const PuffModel& model,
                                   const Recording& rec, double win_len_s,
                                   double step_s) {
  std::vector<Window> windows = extract_windows(rec, win_len_s, step_s);
  if (windows.empty()) {
    throw std::invalid_argument(
        "predict_recording: recording shorter than one window");
  }
  ProbabilityTrace trace;
  trace.step_s = step_s;
  trace.probs.reserve(windows.size());
  trace.end_epochs_s.reserve(windows.size());

  constexpr std::size_t kInferBatch = 64;
  Batch batch;
  for (std::size_t start = 0; start < windows.size(); start += kInferBatch) {
    const std::size_t count =
        std::min(kInferBatch, windows.size() - start);
    batch.clear();
    for (std::size_t i = 0; i < count; ++i) {
      batch.push_back(windows[start + i].data);
    }
    const Eigen::VectorXd probs = forward(model, batch, false, nullptr);
    for (std::size_t i = 0; i < count; ++i) {
      trace.probs.push_back(probs(static_cast<Eigen::Index>(i)));
      trace.end_epochs_s.push_back(windows[start + i].end_epoch_s);
    }
  }
  return trace;
}

std::vector<int> local_maxima(const std::vector<double>& values) {
  const int n = static_cast<int>(values.size());
  std::vector<int> peaks;
  int i = 0;
  while (i < n) {
    // Maximal run of equal values [i, j].
    int j = i;
    while (j + 1 < n && values[j + 1] == values[i]) ++j;
    const bool rises = i == 0 || values[i - 1] < values[i];
    const bool falls = j == n - 1 || values[j + 1] < values[i];
    if (rises && falls) peaks.push_back(i);
    i = j + 1;
  }
  return peaks;
}

PuffSet detect_puffs(const ProbabilityTrace& trace,
                     const DetectParams& params) {
  if (trace.probs.empty()) {
    throw std::invalid_argument("detect_puffs: empty trace");
  }
  if (trace.probs.size() != trace.end_epochs_s.size()) {
    throw std::invalid_argument("detect_puffs: trace length mismatch");
  }

  std::vector<int> candidates = local_maxima(trace.probs);
  if (params.threshold_first) {
    std::erase_if(candidates, [&](int i) {
      return trace.probs[static_cast<std::size_t>(i)] < params.lambda_p;
    });
  }

  // Higher peaks claim their neighborhood first; ties resolve by time.
  std::vector<int> by_height = candidates;
  std::sort(by_height.begin(), by_height.end(), [&](int a, int b) {
    const double pa = trace.probs[static_cast<std::size_t>(a)];
    const double pb = trace.probs[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  std::vector<int> kept;
  for (int idx : by_height) {
    const bool blocked =
        std::any_of(kept.begin(), kept.end(), [&](int k) {
          return std::abs(k - idx) < params.min_distance;
        });
    if (!blocked) kept.push_back(idx);
  }

  if (!params.threshold_first) {
    std::erase_if(kept, [&](int i) {
      return trace.probs[static_cast<std::size_t>(i)] < params.lambda_p;
    });
  }
  std::sort(kept.begin(), kept.end());

  PuffSet out;
  out.timestamps.reserve(kept.size());
  for (int idx : kept) {
    out.timestamps.push_back(trace.end_epochs_s[static_cast<std::size_t>(idx)]);
  }
  return out;
}

}  // namespace puffline
