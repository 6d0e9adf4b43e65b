#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace puffline {

enum class WristSide { Left, Right };

inline const char* to_string(WristSide w) {
  return w == WristSide::Left ? "left" : "right";
}

// Channel order is fixed throughout the library.
inline constexpr int kChannels = 6;
inline constexpr int kAx = 0, kAy = 1, kAz = 2, kGx = 3, kGy = 4, kGz = 5;

// Uniformly sampled 6-axis IMU stream. Row i holds [ax ay az gx gy gz]
// sampled at start_epoch_s + i / sample_rate_hz.
struct Recording {
  Eigen::MatrixXd samples;  // M x 6
  double sample_rate_hz = 50.0;
  double start_epoch_s = 0.0;
  WristSide wrist = WristSide::Right;
  std::string subject_id;
  std::string accel_unit = "m/s^2";  // declared unit, metadata only

  Eigen::Index length() const { return samples.rows(); }
  double time_of(Eigen::Index i) const {
    return start_epoch_s + static_cast<double>(i) / sample_rate_hz;
  }
  double duration_s() const {
    return static_cast<double>(length()) / sample_rate_hz;
  }
};

// [start, end] interval in epoch seconds.
struct Interval {
  double start = 0.0;
  double end = 0.0;
};

struct PuffAnnotation {
  double start_epoch_s = 0.0;
  double end_epoch_s = 0.0;  // hand back at rest
};

struct RecordingAnnotations {
  std::vector<PuffAnnotation> puffs;     // sorted by end time
  std::vector<Interval> sessions;        // sorted, non-overlapping
};

struct AnnotatedRecording {
  Recording recording;
  RecordingAnnotations annotations;
};

struct SubjectData {
  std::string subject_id;
  std::vector<AnnotatedRecording> recordings;
};

}  // namespace puffline
