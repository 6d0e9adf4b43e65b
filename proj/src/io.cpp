#include "puffline/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

namespace puffline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path + " for writing");
  return out;
}

json parse_json_file(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return j;
}

void dump_json_file(const std::string& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw InputError("write failed for " + path);
}

// Skips comment lines; returns false at EOF.
bool next_data_line(std::ifstream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    return true;
  }
  return false;
}

double parse_number(const char*& p, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(p, &end);
  if (end == p) throw InputError(path + ": malformed number");
  p = end;
  if (*p == ',') ++p;
  return v;
}

WristSide wrist_from_string(const std::string& s, const std::string& path) {
  if (s == "left") return WristSide::Left;
  if (s == "right") return WristSide::Right;
  throw InputError(path + ": wrist must be \"left\" or \"right\"");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

RawRecording read_recording_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!next_data_line(in, line) || line != "t,ax,ay,az,gx,gy,gz") {
    throw InputError(path + ": expected header t,ax,ay,az,gx,gy,gz");
  }
  std::vector<double> flat;
  RawRecording raw;
  while (next_data_line(in, line)) {
    const char* p = line.c_str();
    raw.timestamps.push_back(parse_number(p, path));
    for (int c = 0; c < kChannels; ++c) flat.push_back(parse_number(p, path));
  }
  const auto m = static_cast<Eigen::Index>(raw.timestamps.size());
  raw.values.resize(m, kChannels);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int c = 0; c < kChannels; ++c) {
      raw.values(i, c) = flat[static_cast<std::size_t>(i) * kChannels +
                              static_cast<std::size_t>(c)];
    }
  }
  return raw;
}

void write_recording_csv(const std::string& path, const Recording& rec,
                         const std::string& config_hash) {
  std::ofstream out = open_out(path);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "t,ax,ay,az,gx,gy,gz\n";
  for (Eigen::Index i = 0; i < rec.length(); ++i) {
    out << format_double(rec.time_of(i));
    for (int c = 0; c < kChannels; ++c) {
      out << ',' << format_double(rec.samples(i, c));
    }
    out << '\n';
  }
  if (!out) throw InputError("write failed for " + path);
}

Sidecar read_sidecar(const std::string& path) {
  const json j = parse_json_file(path);
  Sidecar s;
  try {
    s.subject = j.at("subject").get<std::string>();
    s.wrist = wrist_from_string(j.at("wrist").get<std::string>(), path);
    s.fs = j.at("fs").get<double>();
    if (j.contains("unit")) s.unit = j.at("unit").get<std::string>();
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (s.fs <= 0.0) throw InputError(path + ": fs must be positive");
  return s;
}

void write_sidecar(const std::string& path, const Sidecar& sidecar,
                   const std::string& config_hash) {
  json j{{"subject", sidecar.subject},
         {"wrist", to_string(sidecar.wrist)},
         {"fs", sidecar.fs},
         {"unit", sidecar.unit}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  dump_json_file(path, j);
}

RecordingAnnotations read_annotations(const std::string& path) {
  const json j = parse_json_file(path);
  RecordingAnnotations annot;
  try {
    for (const auto& p : j.at("puffs")) {
      annot.puffs.push_back(
          {p.at("start").get<double>(), p.at("end").get<double>()});
    }
    for (const auto& s : j.at("sessions")) {
      annot.sessions.push_back(
          {s.at("start").get<double>(), s.at("end").get<double>()});
    }
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  std::sort(annot.puffs.begin(), annot.puffs.end(),
            [](const PuffAnnotation& a, const PuffAnnotation& b) {
              return a.end_epoch_s < b.end_epoch_s;
            });
  std::sort(annot.sessions.begin(), annot.sessions.end(),
            [](const Interval& a, const Interval& b) {
              return a.start < b.start;
            });
  return annot;
}

void write_annotations(const std::string& path,
                       const RecordingAnnotations& annot,
                       const std::string& config_hash) {
  json puffs = json::array();
  for (const auto& p : annot.puffs) {
    puffs.push_back({{"start", p.start_epoch_s}, {"end", p.end_epoch_s}});
  }
  json sessions = json::array();
  for (const auto& s : annot.sessions) {
    sessions.push_back({{"start", s.start}, {"end", s.end}});
  }
  json j{{"puffs", puffs}, {"sessions", sessions}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  dump_json_file(path, j);
}

Recording make_uniform_recording(const RawRecording& raw,
                                 const Sidecar& sidecar, double target_fs,
                                 bool allow_resample) {
  if (raw.timestamps.size() < 2) {
    throw InputError("recording has fewer than 2 samples");
  }
  const double t0 = raw.timestamps.front();
  bool uniform = std::abs(sidecar.fs - target_fs) < 1e-9;
  if (uniform) {
    const double tol = 0.25 / target_fs;
    for (std::size_t i = 0; i < raw.timestamps.size(); ++i) {
      if (std::abs(raw.timestamps[i] -
                   (t0 + static_cast<double>(i) / target_fs)) > tol) {
        uniform = false;
        break;
      }
    }
  }

  Recording rec;
  if (uniform) {
    rec.samples = raw.values;
    rec.sample_rate_hz = target_fs;
    rec.start_epoch_s = t0;
  } else {
    if (!allow_resample) {
      throw InputError("recording is not on the uniform grid; preprocess it first");
    }
    rec = resample_uniform(raw.timestamps, raw.values, target_fs);
  }
  rec.wrist = sidecar.wrist;
  rec.subject_id = sidecar.subject;
  rec.accel_unit = sidecar.unit;
  return rec;
}

PuffSet read_puffset(const std::string& path) {
  const json j = parse_json_file(path);
  PuffSet out;
  try {
    for (const auto& t : j.at("puffs")) out.timestamps.push_back(t.get<double>());
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  std::sort(out.timestamps.begin(), out.timestamps.end());
  return out;
}

void write_puffset(const std::string& path, const PuffSet& puffs,
                   const std::string& config_hash) {
  json j{{"puffs", puffs.timestamps}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  dump_json_file(path, j);
}

SessionSet read_sessionset(const std::string& path) {
  const json j = parse_json_file(path);
  SessionSet out;
  try {
    for (const auto& s : j.at("sessions")) {
      out.intervals.push_back(
          {s.at("start").get<double>(), s.at("end").get<double>()});
    }
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  std::sort(out.intervals.begin(), out.intervals.end(),
            [](const Interval& a, const Interval& b) {
              return a.start < b.start;
            });
  return out;
}

void write_sessionset(const std::string& path, const SessionSet& sessions,
                      const std::string& config_hash) {
  json arr = json::array();
  for (const auto& s : sessions.intervals) {
    arr.push_back({{"start", s.start}, {"end", s.end}});
  }
  json j{{"sessions", arr}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  dump_json_file(path, j);
}

ProbabilityTrace read_trace_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!next_data_line(in, line) || line != "t,p") {
    throw InputError(path + ": expected header t,p");
  }
  ProbabilityTrace trace;
  while (next_data_line(in, line)) {
    const char* p = line.c_str();
    trace.end_epochs_s.push_back(parse_number(p, path));
    trace.probs.push_back(parse_number(p, path));
  }
  if (trace.end_epochs_s.size() >= 2) {
    trace.step_s = trace.end_epochs_s[1] - trace.end_epochs_s[0];
  }
  return trace;
}

void write_trace_csv(const std::string& path, const ProbabilityTrace& trace,
                     const std::string& config_hash) {
  std::ofstream out = open_out(path);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "t,p\n";
  for (std::size_t i = 0; i < trace.probs.size(); ++i) {
    out << format_double(trace.end_epochs_s[i]) << ','
        << format_double(trace.probs[i]) << '\n';
  }
  if (!out) throw InputError("write failed for " + path);
}

void write_history_csv(const std::string& path,
                       const std::vector<double>& epoch_losses,
                       const std::string& config_hash) {
  std::ofstream out = open_out(path);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
    out << (i + 1) << ',' << format_double(epoch_losses[i]) << '\n';
  }
  if (!out) throw InputError("write failed for " + path);
}

std::vector<SubjectData> load_dataset(const std::string& dir, double target_fs,
                                      bool allow_resample,
                                      bool require_annotations) {
  if (!fs::is_directory(dir)) throw InputError(dir + " is not a directory");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    if (p.extension() == ".csv" &&
        p.stem().extension() != ".trace") {
      stems.push_back((p.parent_path() / p.stem()).string());
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw InputError(dir + " contains no recording CSVs");

  std::map<std::string, SubjectData> by_subject;
  for (const auto& stem : stems) {
    const Sidecar sidecar = read_sidecar(stem + ".json");
    const RawRecording raw = read_recording_csv(stem + ".csv");
    AnnotatedRecording ar;
    ar.recording =
        make_uniform_recording(raw, sidecar, target_fs, allow_resample);
    const std::string annot_path = stem + ".annot.json";
    if (fs::exists(annot_path)) {
      ar.annotations = read_annotations(annot_path);
    } else if (require_annotations) {
      throw InputError("missing annotations " + annot_path);
    }
    auto& subject = by_subject[sidecar.subject];
    subject.subject_id = sidecar.subject;
    subject.recordings.push_back(std::move(ar));
  }

  std::vector<SubjectData> dataset;
  dataset.reserve(by_subject.size());
  for (auto& [id, subject] : by_subject) dataset.push_back(std::move(subject));
  return dataset;
}

void write_dataset(const std::string& dir,
                   const std::vector<SubjectData>& dataset,
                   const std::string& config_hash) {
  fs::create_directories(dir);
  for (const auto& subject : dataset) {
    for (std::size_t r = 0; r < subject.recordings.size(); ++r) {
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_r%02zu", r);
      const std::string stem =
          (fs::path(dir) / (subject.subject_id + suffix)).string();
      const auto& ar = subject.recordings[r];
      write_recording_csv(stem + ".csv", ar.recording, config_hash);
      Sidecar sidecar{ar.recording.subject_id, ar.recording.wrist,
                      ar.recording.sample_rate_hz, ar.recording.accel_unit};
      write_sidecar(stem + ".json", sidecar, config_hash);
      write_annotations(stem + ".annot.json", ar.annotations, config_hash);
    }
  }
}

namespace {

json confusion_json(const Confusion& c) {
  json j{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  if (c.tn.has_value()) j["tn"] = *c.tn;
  const Prf p = prf(c);
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  if (p.degenerate) j["degenerate"] = true;
  return j;
}

}  // namespace

void write_evaluation_json(const std::string& path, const Confusion& c,
                           double weighted_acc, double jaccard_index,
                           const std::string& config_hash) {
  json j = confusion_json(c);
  if (!std::isnan(weighted_acc)) j["weighted_accuracy"] = weighted_acc;
  if (!std::isnan(jaccard_index)) j["jaccard"] = jaccard_index;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  dump_json_file(path, j);
}

void write_loso_report_json(const std::string& path, const LosoReport& report,
                            const std::string& config_hash) {
  json folds = json::array();
  for (const auto& fr : report.folds) {
    folds.push_back({{"subject", fr.subject_id},
                     {"puffs", confusion_json(fr.puffs)},
                     {"windows", confusion_json(fr.windows)},
                     {"sessions", confusion_json(fr.sessions)},
                     {"session_windows", confusion_json(fr.session_windows)},
                     {"jaccard", fr.jaccard_concat}});
  }
  json pooled{
      {"puffs", confusion_json(report.pooled_puffs)},
      {"windows", confusion_json(report.pooled_windows)},
      {"sessions", confusion_json(report.pooled_sessions)},
      {"session_windows", confusion_json(report.pooled_session_windows)},
      {"puff_weighted_accuracy", report.puff_weighted_accuracy},
      {"session_weighted_accuracy", report.session_weighted_accuracy},
      {"jaccard_concatenated", report.jaccard_concat},
      {"jaccard_duration_weighted", report.jaccard_duration_weighted}};
  json j{{"folds", folds}, {"pooled", pooled}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  dump_json_file(path, j);
}

void write_loso_summary_csv(const std::string& path, const LosoReport& report,
                            const std::string& config_hash) {
  std::ofstream out = open_out(path);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "fold,puff_tp,puff_fp,puff_fn,puff_precision,puff_recall,puff_f1,"
         "session_tp,session_fp,session_fn,session_precision,session_recall,"
         "session_f1,jaccard\n";
  auto row = [&](const std::string& name, const Confusion& puffs,
                 const Confusion& sessions, double ji) {
    const Prf pp = prf(puffs);
    const Prf sp = prf(sessions);
    out << name << ',' << puffs.tp << ',' << puffs.fp << ',' << puffs.fn << ','
        << format_double(pp.precision) << ',' << format_double(pp.recall)
        << ',' << format_double(pp.f1) << ',' << sessions.tp << ','
        << sessions.fp << ',' << sessions.fn << ','
        << format_double(sp.precision) << ',' << format_double(sp.recall)
        << ',' << format_double(sp.f1) << ',' << format_double(ji) << '\n';
  };
  for (const auto& fr : report.folds) {
    row(fr.subject_id, fr.puffs, fr.sessions, fr.jaccard_concat);
  }
  row("pooled", report.pooled_puffs, report.pooled_sessions,
      report.jaccard_concat);
  if (!out) throw InputError("write failed for " + path);
}

}  // namespace puffline
