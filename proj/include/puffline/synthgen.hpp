#pragma once

#include <cstdint>
#include <vector>

#include "puffline/types.hpp"

namespace puffline {

// Deterministic synthetic IMU generator: all-day background noise with
// planted raise-hold-lower puff gestures grouped into sessions. Duration
// distributions default to the observed session/puff statistics; the
// noise/gesture amplitude ratio is the difficulty knob.
struct SynthConfig {
  int n_subjects = 5;
  int sessions_per_subject = 3;
  int puffs_min = 6;
  int puffs_max = 10;
  double puff_duration_median_s = 4.75;   // lognormal median
  double puff_duration_std_s = 1.47;      // lognormal standard deviation
  double session_duration_mean_s = 485.0; // normal, clipped to fit the puffs
  double session_duration_std_s = 197.0;
  double inter_session_gap_s = 250.0;     // minimum gap between sessions
  double gap_jitter_s = 60.0;             // uniform extra gap
  double lead_s = 40.0;                   // quiet head and tail
  double noise_amplitude = 1.0;
  double gesture_amplitude = 3.0;
  double recording_length_s = 0.0;        // 0 derives the length; else must fit
  double sample_rate_hz = 50.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Lognormal shape parameter matching a given median and standard deviation.
double lognormal_sigma(double median, double stddev);

// One recording per subject, with puff and session annotations. Subjects
// alternate wrist side (even index right, odd index left); left-wrist
// recordings are stored in the left-wrist frame so the preprocessing mirror
// applies.
std::vector<SubjectData> generate_dataset(const SynthConfig& cfg);

}  // namespace puffline
