#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "puffline/detect.hpp"
#include "puffline/pipeline.hpp"
#include "puffline/sessions.hpp"
#include "puffline/types.hpp"

namespace puffline {

// Malformed or missing input files.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// As-parsed recording stream; possibly non-uniform timestamps.
struct RawRecording {
  std::vector<double> timestamps;
  Eigen::MatrixXd values;  // M x 6
};

// Per-recording metadata sidecar.
struct Sidecar {
  std::string subject;
  WristSide wrist = WristSide::Right;
  double fs = 50.0;
  std::string unit = "m/s^2";
};

RawRecording read_recording_csv(const std::string& path);
void write_recording_csv(const std::string& path, const Recording& rec,
                         const std::string& config_hash);

Sidecar read_sidecar(const std::string& path);
void write_sidecar(const std::string& path, const Sidecar& sidecar,
                   const std::string& config_hash);

RecordingAnnotations read_annotations(const std::string& path);
void write_annotations(const std::string& path,
                       const RecordingAnnotations& annot,
                       const std::string& config_hash);

// Builds a Recording from a parsed stream. Streams already on the uniform
// grid are taken as-is; otherwise they are linearly resampled when
// allow_resample is set and rejected when it is not.
Recording make_uniform_recording(const RawRecording& raw,
                                 const Sidecar& sidecar, double target_fs,
                                 bool allow_resample);

PuffSet read_puffset(const std::string& path);
void write_puffset(const std::string& path, const PuffSet& puffs,
                   const std::string& config_hash);

SessionSet read_sessionset(const std::string& path);
void write_sessionset(const std::string& path, const SessionSet& sessions,
                      const std::string& config_hash);

ProbabilityTrace read_trace_csv(const std::string& path);
void write_trace_csv(const std::string& path, const ProbabilityTrace& trace,
                     const std::string& config_hash);

void write_history_csv(const std::string& path,
                       const std::vector<double>& epoch_losses,
                       const std::string& config_hash);

// Scans a flat directory of <stem>.csv / <stem>.json / <stem>.annot.json
// triples and groups the recordings by sidecar subject id (sorted).
std::vector<SubjectData> load_dataset(const std::string& dir, double target_fs,
                                      bool allow_resample,
                                      bool require_annotations);

// Writes one <subject>_rNN triple per recording.
void write_dataset(const std::string& dir,
                   const std::vector<SubjectData>& dataset,
                   const std::string& config_hash);

void write_loso_report_json(const std::string& path, const LosoReport& report,
                            const std::string& config_hash);
void write_loso_summary_csv(const std::string& path, const LosoReport& report,
                            const std::string& config_hash);

// Confusion counts with derived precision/recall/F1; weighted accuracy and
// Jaccard index are included when the scheme defines them (pass NaN to omit).
void write_evaluation_json(const std::string& path, const Confusion& c,
                           double weighted_acc, double jaccard_index,
                           const std::string& config_hash);

// Shortest round-trip decimal rendering; used everywhere numbers are written.
std::string format_double(double v);

}  // namespace puffline
