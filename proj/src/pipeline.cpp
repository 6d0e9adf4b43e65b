#include "puffline/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

namespace puffline {

Recording preprocess_recording(const Recording& rec, const FirFilter& filt) {
  if (rec.wrist == WristSide::Left) {
    return apply_highpass(mirror_hand(rec), filt);
  }
  return apply_highpass(rec, filt);
}

GtIntervals puff_intervals(const RecordingAnnotations& annot) {
  GtIntervals out;
  out.reserve(annot.puffs.size());
  for (const auto& p : annot.puffs) {
    out.push_back({p.start_epoch_s, p.end_epoch_s});
  }
  std::sort(out.begin(), out.end(),
            [](const Interval& a, const Interval& b) {
              return a.start < b.start;
            });
  return out;
}

namespace {

bool inside_any(const std::vector<Interval>& intervals, double t) {
  for (const auto& iv : intervals) {
    if (t >= iv.start && t <= iv.end) return true;
  }
  return false;
}

}  // namespace

LosoReport run_loso(const std::vector<SubjectData>& dataset,
                    const PipelineParams& params) {
  if (dataset.size() < 2) {
    throw std::invalid_argument("run_loso: need at least 2 subjects");
  }

  const FirFilter filt = design_highpass(
      params.signal.cutoff_hz, params.signal.taps, params.signal.target_fs);

  // Preprocessing does not depend on the fold split, so it runs once.
  std::vector<SubjectData> prepped;
  prepped.reserve(dataset.size());
  for (const auto& subject : dataset) {
    SubjectData p;
    p.subject_id = subject.subject_id;
    for (const auto& ar : subject.recordings) {
      p.recordings.push_back(
          {preprocess_recording(ar.recording, filt), ar.annotations});
    }
    prepped.push_back(std::move(p));
  }

  LosoReport report;
  report.pooled_windows.tn = 0;
  report.pooled_session_windows.tn = 0;

  std::vector<Interval> all_pred_sessions, all_gt_sessions;
  double ji_weight_sum = 0.0, ji_weighted_sum = 0.0;

  for (std::size_t fold = 0; fold < prepped.size(); ++fold) {
    FoldReport fr;
    fr.subject_id = prepped[fold].subject_id;
    fr.windows.tn = 0;
    fr.session_windows.tn = 0;

    std::vector<AnnotatedRecording> train_recs;
    for (std::size_t s = 0; s < prepped.size(); ++s) {
      if (s == fold) continue;
      for (const auto& ar : prepped[s].recordings) train_recs.push_back(ar);
    }

    const std::vector<Window> training_set = build_training_set(
        train_recs, params.augment_factor,
        derive_seed(params.seed, "fold-windows", fold), params.windows,
        params.negative_ratio);

    TrainConfig tc = params.train;
    tc.seed = derive_seed(params.seed, "fold-train", fold);
    TrainResult trained = train(training_set, tc, params.net);
    fr.epoch_losses = trained.epoch_losses;
    fr.model = quantize_to_f32(trained.model);

    std::vector<Interval> fold_pred_sessions, fold_gt_sessions;
    for (const auto& ar : prepped[fold].recordings) {
      const ProbabilityTrace trace =
          predict_recording(fr.model, ar.recording, params.windows.win_len_s,
                            params.windows.step_s);
      const PuffSet detected = detect_puffs(trace, params.detect);
      const SessionSet located = localize_sessions(detected, params.sessions);

      fr.puffs += evaluate_puffs(detected, puff_intervals(ar.annotations));
      fr.sessions += evaluate_sessions(located, ar.annotations.sessions);

      std::vector<int> pred_labels, gt_labels;
      std::vector<int> pred_in_session, gt_in_session;
      pred_labels.reserve(trace.probs.size());
      for (std::size_t i = 0; i < trace.probs.size(); ++i) {
        const double t = trace.end_epochs_s[i];
        pred_labels.push_back(trace.probs[i] >= params.eval.window_threshold
                                  ? kLabelPositive
                                  : kLabelNegative);
        gt_labels.push_back(
            label_window(t, ar.annotations.puffs, params.windows.label_epsilon_s));
        pred_in_session.push_back(
            inside_any(located.intervals, t) ? kLabelPositive : kLabelNegative);
        gt_in_session.push_back(
            inside_any(ar.annotations.sessions, t) ? kLabelPositive
                                                   : kLabelNegative);
      }
      fr.windows += window_confusion(pred_labels, gt_labels);
      fr.session_windows += window_confusion(pred_in_session, gt_in_session);

      const double ji = jaccard(located.intervals, ar.annotations.sessions);
      const double dur = ar.recording.duration_s();
      ji_weight_sum += dur;
      ji_weighted_sum += ji * dur;

      fold_pred_sessions.insert(fold_pred_sessions.end(),
                                located.intervals.begin(),
                                located.intervals.end());
      fold_gt_sessions.insert(fold_gt_sessions.end(),
                              ar.annotations.sessions.begin(),
                              ar.annotations.sessions.end());
    }
    fr.jaccard_concat = jaccard(fold_pred_sessions, fold_gt_sessions);
    fr.predicted_sessions = fold_pred_sessions;

    all_pred_sessions.insert(all_pred_sessions.end(),
                             fold_pred_sessions.begin(),
                             fold_pred_sessions.end());
    all_gt_sessions.insert(all_gt_sessions.end(), fold_gt_sessions.begin(),
                           fold_gt_sessions.end());

    report.pooled_puffs += fr.puffs;
    report.pooled_windows += fr.windows;
    report.pooled_sessions += fr.sessions;
    report.pooled_session_windows += fr.session_windows;
    report.folds.push_back(std::move(fr));
  }

  report.puff_prf = prf(report.pooled_puffs);
  report.session_prf = prf(report.pooled_sessions);
  report.puff_weighted_accuracy =
      weighted_accuracy(report.pooled_windows, params.eval.weight_puffs);
  report.session_weighted_accuracy = weighted_accuracy(
      report.pooled_session_windows, params.eval.weight_sessions);
  report.jaccard_concat = jaccard(all_pred_sessions, all_gt_sessions);
  report.jaccard_duration_weighted =
      ji_weight_sum > 0.0 ? ji_weighted_sum / ji_weight_sum : 1.0;
  return report;
}

}  // namespace puffline
