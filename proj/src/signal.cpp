#include "puffline/signal.hpp"

#include <cmath>
#include <stdexcept>

namespace puffline {

namespace {

// sin(pi x) / (pi x), 1 at x = 0.
double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

}  // namespace

Recording mirror_hand(const Recording& rec) {
  if (rec.wrist != WristSide::Left) {
    throw std::invalid_argument(
        "mirror_hand: recording is already in the right-wrist frame");
  }
  Recording out = rec;
  out.samples.col(kAx) = -rec.samples.col(kAx);
  out.samples.col(kGy) = -rec.samples.col(kGy);
  out.samples.col(kGz) = -rec.samples.col(kGz);
  out.wrist = WristSide::Right;
  return out;
}

FirFilter design_highpass(double cutoff_hz, int taps, double fs_hz) {
  if (fs_hz <= 0.0) throw std::invalid_argument("design_highpass: fs <= 0");
  if (!(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0)) {
    throw std::invalid_argument(
        "design_highpass: cutoff must lie in (0, fs/2)");
  }
  if (taps < 3) throw std::invalid_argument("design_highpass: taps < 3");

  const double mid = (taps - 1) / 2.0;
  const double fc = cutoff_hz / fs_hz;
  FirFilter filt;
  filt.coefficients.resize(taps);
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double x = n - mid;
    const double lowpass = 2.0 * fc * sinc(2.0 * fc * x);
    const double allpass = sinc(x);
    const double window =
        0.54 - 0.46 * std::cos(2.0 * M_PI * n / (taps - 1));
    filt.coefficients[n] = (allpass - lowpass) * window;
    sum += filt.coefficients[n];
  }
  // Exact DC null; the correction is O(1e-4 / taps) per tap and preserves
  // symmetry.
  const double dc = sum / taps;
  for (auto& c : filt.coefficients) c -= dc;
  return filt;
}

Recording apply_highpass(const Recording& rec, const FirFilter& filt) {
  if (rec.length() < 1) {
    throw std::invalid_argument("apply_highpass: empty recording");
  }
  const Eigen::Index taps = filt.length();
  const Eigen::Index delay = (taps - 1) / 2;  // floor of the fractional delay
  const Eigen::Index m = rec.length();

  // Reversed taps turn the convolution into a forward dot product.
  Eigen::VectorXd rev(taps);
  for (Eigen::Index k = 0; k < taps; ++k) {
    rev(k) = filt.coefficients[taps - 1 - k];
  }

  Recording out = rec;
  Eigen::VectorXd x(m);
  for (int ch = kAx; ch <= kAz; ++ch) {
    x = rec.samples.col(ch);
    for (Eigen::Index i = 0; i < m; ++i) {
      // y_full[i + delay] with zero-padded input:
      //   sum_j rev[j] * x[i + delay - (taps - 1) + j]
      const Eigen::Index base = i + delay - (taps - 1);
      const Eigen::Index j_lo = std::max<Eigen::Index>(0, -base);
      const Eigen::Index j_hi = std::min<Eigen::Index>(taps - 1, m - 1 - base);
      if (j_lo > j_hi) {
        out.samples(i, ch) = 0.0;
        continue;
      }
      const Eigen::Index len = j_hi - j_lo + 1;
      out.samples(i, ch) =
          rev.segment(j_lo, len).dot(x.segment(base + j_lo, len));
    }
  }
  return out;
}

Recording resample_uniform(const std::vector<double>& timestamps,
                           const Eigen::MatrixXd& values, double target_fs) {
  if (timestamps.size() < 2) {
    throw std::invalid_argument("resample_uniform: need at least 2 samples");
  }
  if (static_cast<Eigen::Index>(timestamps.size()) != values.rows()) {
    throw std::invalid_argument(
        "resample_uniform: timestamp/value length mismatch");
  }
  if (values.cols() != kChannels) {
    throw std::invalid_argument("resample_uniform: expected 6 channels");
  }
  if (target_fs <= 0.0) {
    throw std::invalid_argument("resample_uniform: target_fs <= 0");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) {
      throw std::invalid_argument(
          "resample_uniform: timestamps must be strictly increasing");
    }
  }

  const double t0 = timestamps.front();
  const double t1 = timestamps.back();
  // Small nudge so exact multiples of the grid spacing keep their last point.
  const Eigen::Index n_out =
      static_cast<Eigen::Index>(std::floor((t1 - t0) * target_fs + 1e-9)) + 1;

  Recording out;
  out.sample_rate_hz = target_fs;
  out.start_epoch_s = t0;
  out.samples.resize(n_out, kChannels);

  std::size_t seg = 0;
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double t = t0 + static_cast<double>(i) / target_fs;
    while (seg + 2 < timestamps.size() && timestamps[seg + 1] < t) ++seg;
    const double ta = timestamps[seg];
    const double tb = timestamps[seg + 1];
    const double u = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
    out.samples.row(i) = (1.0 - u) * values.row(seg) + u * values.row(seg + 1);
  }
  return out;
}

}  // namespace puffline
