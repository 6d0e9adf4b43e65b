#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "puffline/detect.hpp"
#include "puffline/eval.hpp"
#include "puffline/net.hpp"
#include "puffline/sessions.hpp"
#include "puffline/signal.hpp"
#include "puffline/windows.hpp"

namespace puffline {

struct SignalParams {
  double cutoff_hz = 1.0;
  int taps = 512;
  double target_fs = 50.0;
};

struct EvalParams {
  double weight_puffs = 7.27;      // session time over puff time
  double weight_sessions = 13.76;  // recording time over session time
  double window_threshold = 0.5;   // probability cut for window-level labels
};

// Every tunable of the pipeline; the defaults reproduce the reference setup.
struct PipelineParams {
  SignalParams signal;
  WindowingParams windows;
  int augment_factor = 1;
  double negative_ratio = 0.0;  // 0 keeps all negative windows
  NetConfig net;
  TrainConfig train;
  DetectParams detect;
  SessionParams sessions;
  EvalParams eval;
  std::uint64_t seed = 1;
};

// Mirrors left-wrist recordings into the right-wrist frame and removes
// gravity from the acceleration channels.
Recording preprocess_recording(const Recording& rec, const FirFilter& filt);

// GT puff intervals of a recording, for the strict event scheme.
GtIntervals puff_intervals(const RecordingAnnotations& annot);

struct FoldReport {
  std::string subject_id;
  Confusion puffs;            // strict event scheme
  Confusion windows;          // Eq-style window labels vs thresholded probs
  Confusion sessions;         // midpoint scheme
  Confusion session_windows;  // session membership, GT vs predicted
  double jaccard_concat = 0.0;
  std::vector<Interval> predicted_sessions;  // across the fold's recordings
  PuffModel model;                           // f32-quantized fold model
  std::vector<double> epoch_losses;
};

struct LosoReport {
  std::vector<FoldReport> folds;
  Confusion pooled_puffs;
  Confusion pooled_windows;
  Confusion pooled_sessions;
  Confusion pooled_session_windows;
  Prf puff_prf;
  Prf session_prf;
  double puff_weighted_accuracy = 0.0;
  double session_weighted_accuracy = 0.0;
  double jaccard_concat = 0.0;             // all test recordings pooled
  double jaccard_duration_weighted = 0.0;  // per-recording JI, duration weights
};

// Leave-one-subject-out over the dataset: for every subject, train on all
// others and run detect -> localize -> evaluate on the held-out recordings.
// Pooled metrics sum the per-fold counts. Fold models are quantized through
// f32 before prediction so results match a model round-tripped through disk.
LosoReport run_loso(const std::vector<SubjectData>& dataset,
                    const PipelineParams& params);

}  // namespace puffline
