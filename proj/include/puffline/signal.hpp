#pragma once

#include <vector>

#include "puffline/types.hpp"

namespace puffline {

// Linear-phase FIR filter. Coefficients are symmetric, so the group delay is
// (length - 1) / 2 samples (fractional for even lengths).
struct FirFilter {
  std::vector<double> coefficients;

  int length() const { return static_cast<int>(coefficients.size()); }
  double group_delay_samples() const { return (length() - 1) / 2.0; }
};

// Maps a left-wrist recording into the right-wrist reference frame by
// negating ax, gy and gz. Throws std::invalid_argument on right-wrist input
// so a recording can never be mirrored twice.
Recording mirror_hand(const Recording& rec);

// Linear-phase high-pass: Hamming-windowed band-limited delta minus a
// Hamming-windowed sinc low-pass at cutoff_hz, with an exact DC null. For odd
// tap counts this reduces to classic spectral inversion (negate taps, add one
// at the center); the band-limited delta generalizes it to even lengths.
FirFilter design_highpass(double cutoff_hz, int taps, double fs_hz);

// Convolves the three acceleration channels with filt and realigns the output
// by discarding floor((L-1)/2) samples of group delay; edges are zero-padded
// so output length equals input length. Gyro channels pass through untouched.
Recording apply_highpass(const Recording& rec, const FirFilter& filt);

// Linear interpolation of an irregularly sampled stream onto the uniform grid
// first + i / target_fs covering [first, last]. Timestamps must be strictly
// increasing.
Recording resample_uniform(const std::vector<double>& timestamps,
                           const Eigen::MatrixXd& values, double target_fs);

}  // namespace puffline
