#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "puffline/config.hpp"
#include "puffline/io.hpp"
#include "puffline/pipeline.hpp"
#include "puffline/synthgen.hpp"

namespace fs = std::filesystem;
using namespace puffline;

namespace {

void log(const std::string& msg) { std::cerr << "[puffline] " << msg << "\n"; }

// Range errors in the merged configuration are configuration errors, not
// input errors.
void validate_config(const FullConfig& cfg) {
  try {
    cfg.pipeline.net.validate();
    cfg.pipeline.train.validate();
    cfg.synth.validate();
    if (cfg.pipeline.signal.taps < 3) {
      throw std::invalid_argument("signal.taps must be >= 3");
    }
    if (!(cfg.pipeline.signal.cutoff_hz > 0.0 &&
          cfg.pipeline.signal.cutoff_hz < cfg.pipeline.signal.target_fs / 2)) {
      throw std::invalid_argument("signal.cutoff_hz must lie in (0, fs/2)");
    }
    if (cfg.pipeline.detect.lambda_p < 0.0 || cfg.pipeline.detect.lambda_p > 1.0) {
      throw std::invalid_argument("detect.lambda_p must lie in [0, 1]");
    }
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

FullConfig resolve_config(const CommonArgs& common) {
  FullConfig cfg;
  if (!common.config_path.empty()) cfg = load_config(common.config_path);
  if (common.seed_set) {
    cfg.pipeline.seed = common.seed;
    cfg.synth.seed = common.seed;
  }
  validate_config(cfg);
  return cfg;
}

std::vector<std::string> recording_stems(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError(dir + " is not a directory");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    if (p.extension() == ".csv" && p.stem().extension() != ".trace") {
      stems.push_back((p.parent_path() / p.stem()).string());
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw InputError(dir + " contains no recording CSVs");
  return stems;
}

void cmd_synth(const FullConfig& cfg, const std::string& out_dir) {
  const auto dataset = generate_dataset(cfg.synth);
  write_dataset(out_dir, dataset, config_hash(cfg));
  std::size_t n_recs = 0, n_puffs = 0, n_sessions = 0;
  for (const auto& s : dataset) {
    n_recs += s.recordings.size();
    for (const auto& ar : s.recordings) {
      n_puffs += ar.annotations.puffs.size();
      n_sessions += ar.annotations.sessions.size();
    }
  }
  log("synth: " + std::to_string(dataset.size()) + " subjects, " +
      std::to_string(n_recs) + " recordings, " + std::to_string(n_sessions) +
      " sessions, " + std::to_string(n_puffs) + " puffs -> " + out_dir);
}

void cmd_preprocess(const FullConfig& cfg, const std::string& in_dir,
                    const std::string& out_dir) {
  const auto& sp = cfg.pipeline.signal;
  const FirFilter filt = design_highpass(sp.cutoff_hz, sp.taps, sp.target_fs);
  const std::string hash = config_hash(cfg);
  fs::create_directories(out_dir);
  for (const auto& stem : recording_stems(in_dir)) {
    const std::string name = fs::path(stem).filename().string();
    const Sidecar sidecar = read_sidecar(stem + ".json");
    const RawRecording raw = read_recording_csv(stem + ".csv");
    Recording rec = make_uniform_recording(raw, sidecar, sp.target_fs, true);
    if (rec.wrist == WristSide::Left) {
      rec = mirror_hand(rec);
      log("preprocess " + name + ": mirrored left-wrist recording");
    } else {
      log("preprocess " + name + ": right wrist, mirroring skipped");
    }
    rec = apply_highpass(rec, filt);

    const std::string out_stem = (fs::path(out_dir) / name).string();
    write_recording_csv(out_stem + ".csv", rec, hash);
    write_sidecar(out_stem + ".json",
                  {rec.subject_id, rec.wrist, rec.sample_rate_hz,
                   rec.accel_unit},
                  hash);
    if (fs::exists(stem + ".annot.json")) {
      write_annotations(out_stem + ".annot.json",
                        read_annotations(stem + ".annot.json"), hash);
    }
  }
}

std::vector<AnnotatedRecording> flatten_preprocessed(
    const std::vector<SubjectData>& dataset) {
  std::vector<AnnotatedRecording> recs;
  for (const auto& s : dataset) {
    for (const auto& ar : s.recordings) {
      if (ar.recording.wrist == WristSide::Left) {
        throw InputError("recording for subject " + s.subject_id +
                         " is still left-wrist; run preprocess first");
      }
      recs.push_back(ar);
    }
  }
  return recs;
}

void cmd_train(const FullConfig& cfg, const std::string& in_dir,
               const std::string& model_path,
               const std::string& history_path) {
  const auto& pp = cfg.pipeline;
  const auto dataset =
      load_dataset(in_dir, pp.signal.target_fs, false, true);
  const auto recs = flatten_preprocessed(dataset);

  const auto windows =
      build_training_set(recs, pp.augment_factor,
                         derive_seed(pp.seed, "train-windows"), pp.windows,
                         pp.negative_ratio);
  std::size_t n_pos = 0;
  for (const auto& w : windows) {
    if (w.label == kLabelPositive) ++n_pos;
  }
  log("train: " + std::to_string(windows.size()) + " windows (" +
      std::to_string(n_pos) + " positive, " +
      std::to_string(windows.size() - n_pos) + " negative)");

  TrainConfig tc = pp.train;
  tc.seed = derive_seed(pp.seed, "train");
  const TrainResult result = train(windows, tc, pp.net);
  save_model(result.model, model_path);
  log("train: model saved to " + model_path);
  if (!history_path.empty()) {
    write_history_csv(history_path, result.epoch_losses, config_hash(cfg));
  }
}

Recording load_single_recording(const FullConfig& cfg,
                                const std::string& csv_path,
                                bool allow_resample) {
  const fs::path p(csv_path);
  const std::string stem = (p.parent_path() / p.stem()).string();
  const Sidecar sidecar = read_sidecar(stem + ".json");
  const RawRecording raw = read_recording_csv(csv_path);
  Recording rec = make_uniform_recording(raw, sidecar,
                                         cfg.pipeline.signal.target_fs,
                                         allow_resample);
  if (rec.wrist == WristSide::Left) {
    throw InputError(csv_path + " is still left-wrist; run preprocess first");
  }
  return rec;
}

void cmd_detect(const FullConfig& cfg, const std::string& model_path,
                const std::string& rec_path, const std::string& out_path,
                const std::string& trace_path) {
  const PuffModel model = load_model(model_path);
  const Recording rec = load_single_recording(cfg, rec_path, false);
  const ProbabilityTrace trace =
      predict_recording(model, rec, cfg.pipeline.windows.win_len_s,
                        cfg.pipeline.windows.step_s);
  const PuffSet puffs = detect_puffs(trace, cfg.pipeline.detect);
  write_puffset(out_path, puffs, config_hash(cfg));
  log("detect: " + std::to_string(puffs.timestamps.size()) + " puffs -> " +
      out_path);
  if (!trace_path.empty()) {
    write_trace_csv(trace_path, trace, config_hash(cfg));
  }
}

void cmd_localize(const FullConfig& cfg, const std::string& puffs_path,
                  const std::string& out_path) {
  const PuffSet puffs = read_puffset(puffs_path);
  const SessionSet sessions = localize_sessions(puffs, cfg.pipeline.sessions);
  write_sessionset(out_path, sessions, config_hash(cfg));
  log("localize: " + std::to_string(sessions.intervals.size()) +
      " sessions -> " + out_path);
}

void cmd_evaluate(const FullConfig& cfg, const std::string& mode,
                  const std::string& pred_path, const std::string& gt_path,
                  const std::string& out_path, double weight) {
  const RecordingAnnotations annot = read_annotations(gt_path);
  const std::string hash = config_hash(cfg);
  const double nan = std::nan("");
  if (mode == "puffs") {
    const PuffSet pred = read_puffset(pred_path);
    const Confusion c = evaluate_puffs(pred, puff_intervals(annot));
    write_evaluation_json(out_path, c, nan, nan, hash);
  } else if (mode == "sessions") {
    const SessionSet pred = read_sessionset(pred_path);
    const Confusion c = evaluate_sessions(pred, annot.sessions);
    const double ji = jaccard(pred.intervals, annot.sessions);
    write_evaluation_json(out_path, c, nan, ji, hash);
  } else if (mode == "windows") {
    const ProbabilityTrace trace = read_trace_csv(pred_path);
    std::vector<int> pred_labels, gt_labels;
    for (std::size_t i = 0; i < trace.probs.size(); ++i) {
      pred_labels.push_back(
          trace.probs[i] >= cfg.pipeline.eval.window_threshold
              ? kLabelPositive
              : kLabelNegative);
      gt_labels.push_back(label_window(trace.end_epochs_s[i], annot.puffs,
                                       cfg.pipeline.windows.label_epsilon_s));
    }
    const Confusion c = window_confusion(pred_labels, gt_labels);
    const double w =
        std::isnan(weight) ? cfg.pipeline.eval.weight_puffs : weight;
    write_evaluation_json(out_path, c, weighted_accuracy(c, w), nan, hash);
  } else {
    throw ConfigError("evaluate: mode must be puffs, windows or sessions");
  }
  log("evaluate (" + mode + "): metrics -> " + out_path);
}

void cmd_loso(const FullConfig& cfg, const std::string& in_dir,
              const std::string& out_dir) {
  const auto dataset =
      load_dataset(in_dir, cfg.pipeline.signal.target_fs, true, true);
  const LosoReport report = run_loso(dataset, cfg.pipeline);
  const std::string hash = config_hash(cfg);
  fs::create_directories(out_dir);
  for (const auto& fold : report.folds) {
    save_model(fold.model,
               (fs::path(out_dir) / ("model_" + fold.subject_id + ".puff"))
                   .string());
    write_history_csv(
        (fs::path(out_dir) / ("history_" + fold.subject_id + ".csv")).string(),
        fold.epoch_losses, hash);
  }
  write_loso_report_json((fs::path(out_dir) / "report.json").string(), report,
                         hash);
  write_loso_summary_csv((fs::path(out_dir) / "summary.csv").string(), report,
                         hash);
  char line[256];
  std::snprintf(line, sizeof(line),
                "loso: puff F1 %.4f, session F1 %.4f, JI %.4f -> %s",
                report.puff_prf.f1, report.session_prf.f1,
                report.jaccard_concat, out_dir.c_str());
  log(line);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step smoking-behavior monitoring pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "Configuration file");
  auto* seed_opt =
      app.add_option("--seed", common.seed, "Master seed override");

  std::string in_dir, out_path, model_path, rec_path, trace_path, history_path;
  std::string puffs_path, pred_path, gt_path, mode;
  double weight = std::nan("");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", out_path, "Output directory")->required();

  auto* preprocess = app.add_subcommand(
      "preprocess", "Resample, mirror and gravity-filter recordings");
  preprocess->add_option("--in", in_dir, "Input directory")->required();
  preprocess->add_option("--out", out_path, "Output directory")->required();

  auto* train_cmd =
      app.add_subcommand("train", "Train the puff detector on a directory");
  train_cmd->add_option("--in", in_dir, "Preprocessed data directory")
      ->required();
  train_cmd->add_option("--out", model_path, "Output model file")->required();
  train_cmd->add_option("--history", history_path, "Training-history CSV");

  auto* detect_cmd =
      app.add_subcommand("detect", "Detect puffs in one recording");
  detect_cmd->add_option("--model", model_path, "Model file")->required();
  detect_cmd->add_option("--rec", rec_path, "Recording CSV")->required();
  detect_cmd->add_option("--out", out_path, "Puff-set JSON")->required();
  detect_cmd->add_option("--trace", trace_path, "Optional trace CSV");

  auto* localize =
      app.add_subcommand("localize", "Cluster puffs into sessions");
  localize->add_option("--puffs", puffs_path, "Puff-set JSON")->required();
  localize->add_option("--out", out_path, "Session-set JSON")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions");
  evaluate->add_option("--mode", mode, "puffs | windows | sessions")
      ->required();
  evaluate->add_option("--pred", pred_path, "Predictions file")->required();
  evaluate->add_option("--gt", gt_path, "Annotation JSON")->required();
  evaluate->add_option("--out", out_path, "Metrics JSON")->required();
  evaluate->add_option("--weight", weight, "Weighted-accuracy weight");

  auto* loso = app.add_subcommand(
      "loso", "Leave-one-subject-out experiment over a dataset");
  loso->add_option("--in", in_dir, "Raw dataset directory")->required();
  loso->add_option("--out", out_path, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    common.seed_set = seed_opt->count() > 0;
    const FullConfig cfg = resolve_config(common);
    if (synth->parsed()) {
      cmd_synth(cfg, out_path);
    } else if (preprocess->parsed()) {
      cmd_preprocess(cfg, in_dir, out_path);
    } else if (train_cmd->parsed()) {
      cmd_train(cfg, in_dir, model_path, history_path);
    } else if (detect_cmd->parsed()) {
      cmd_detect(cfg, model_path, rec_path, out_path, trace_path);
    } else if (localize->parsed()) {
      cmd_localize(cfg, puffs_path, out_path);
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, mode, pred_path, gt_path, out_path, weight);
    } else if (loso->parsed()) {
      cmd_loso(cfg, in_dir, out_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
