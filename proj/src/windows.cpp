#include "puffline/windows.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace puffline {

Eigen::Index window_count(Eigen::Index m, Eigen::Index win_len,
                          Eigen::Index step) {
  if (m < win_len) return 0;
  return (m - win_len) / step + 1;
}

std::vector<Window> extract_windows(const Recording& rec, double win_len_s,
                                    double step_s) {
  const double fs = rec.sample_rate_hz;
  const auto win_len = static_cast<Eigen::Index>(std::lround(win_len_s * fs));
  const auto step = static_cast<Eigen::Index>(std::lround(step_s * fs));
  if (win_len < 1 || step < 1) {
    throw std::invalid_argument("extract_windows: window/step too small");
  }
  const Eigen::Index n = window_count(rec.length(), win_len, step);
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Window w;
    const Eigen::Index offset = i * step;
    w.data = rec.samples.middleRows(offset, win_len);
    w.end_epoch_s =
        rec.start_epoch_s + static_cast<double>(offset + win_len) / fs;
    w.label = kUnlabeled;
    out.push_back(std::move(w));
  }
  return out;
}

int label_window(double end_epoch_s, const std::vector<PuffAnnotation>& puffs,
                 double epsilon_s) {
  // First puff with end >= t - eps; positive iff it also ends <= t + eps.
  auto it = std::lower_bound(
      puffs.begin(), puffs.end(), end_epoch_s - epsilon_s,
      [](const PuffAnnotation& p, double t) { return p.end_epoch_s < t; });
  if (it != puffs.end() && it->end_epoch_s <= end_epoch_s + epsilon_s) {
    return kLabelPositive;
  }
  return kLabelNegative;
}

Eigen::Matrix3d rotation_matrix(RotationAxis axis, double angle_deg) {
  const double theta = angle_deg * M_PI / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Matrix3d r;
  if (axis == RotationAxis::X) {
    r << 1, 0, 0,
         0, c, -s,
         0, s, c;
  } else {
    r << c, -s, 0,
         s, c, 0,
         0, 0, 1;
  }
  return r;
}

Window rotate_window(const Window& w, const Eigen::Matrix3d& rotation) {
  if (w.data.cols() != kChannels) {
    throw std::invalid_argument("rotate_window: expected 6 channels");
  }
  Window out;
  out.end_epoch_s = w.end_epoch_s;
  out.label = w.label;
  out.data.resize(w.data.rows(), kChannels);
  // v' = R v per sample, applied to the accel and gyro triples alike: a
  // physically rotated watch rotates both sensor frames.
  out.data.leftCols<3>() = w.data.leftCols<3>() * rotation.transpose();
  out.data.rightCols<3>() = w.data.rightCols<3>() * rotation.transpose();
  return out;
}

Window augment_window(const Window& w, Rng& rng) {
  const double theta_x = rng.normal(0.0, 10.0);
  const double theta_z = rng.normal(0.0, 10.0);
  const Eigen::Matrix3d rx = rotation_matrix(RotationAxis::X, theta_x);
  const Eigen::Matrix3d rz = rotation_matrix(RotationAxis::Z, theta_z);
  Eigen::Matrix3d r;
  switch (rng.uniform_index(4)) {
    case 0: r = rx; break;
    case 1: r = rz; break;
    case 2: r = rz * rx; break;  // rotate around x, then around z
    default: r = rx * rz; break; // rotate around z, then around x
  }
  return rotate_window(w, r);
}

std::vector<Window> build_training_set(
    const std::vector<AnnotatedRecording>& recs, int augment_factor,
    std::uint64_t master_seed, const WindowingParams& params,
    double negative_ratio) {
  if (augment_factor < 0) {
    throw std::invalid_argument("build_training_set: augment_factor < 0");
  }
  std::vector<Window> base;
  for (const auto& ar : recs) {
    auto ws = extract_windows(ar.recording, params.win_len_s, params.step_s);
    for (auto& w : ws) {
      w.label =
          label_window(w.end_epoch_s, ar.annotations.puffs,
                       params.label_epsilon_s);
      base.push_back(std::move(w));
    }
  }

  if (negative_ratio > 0.0) {
    std::size_t n_pos = 0;
    for (const auto& w : base) {
      if (w.label == kLabelPositive) ++n_pos;
    }
    std::vector<std::size_t> neg_idx;
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (base[i].label == kLabelNegative) neg_idx.push_back(i);
    }
    const auto keep = static_cast<std::size_t>(
        std::llround(negative_ratio * static_cast<double>(n_pos)));
    if (keep < neg_idx.size()) {
      Rng rng(derive_seed(master_seed, "negative-subsample"));
      for (std::size_t i = neg_idx.size() - 1; i > 0; --i) {
        std::swap(neg_idx[i], neg_idx[rng.uniform_index(i + 1)]);
      }
      neg_idx.resize(keep);
      std::sort(neg_idx.begin(), neg_idx.end());
      std::vector<Window> kept;
      kept.reserve(n_pos + keep);
      std::size_t cursor = 0;
      for (std::size_t i = 0; i < base.size(); ++i) {
        if (base[i].label == kLabelPositive) {
          kept.push_back(std::move(base[i]));
        } else {
          while (cursor < neg_idx.size() && neg_idx[cursor] < i) ++cursor;
          if (cursor < neg_idx.size() && neg_idx[cursor] == i) {
            kept.push_back(std::move(base[i]));
          }
        }
      }
      base = std::move(kept);
    }
  }

  std::vector<Window> out = base;
  for (int copy = 0; copy < augment_factor; ++copy) {
    for (std::size_t i = 0; i < base.size(); ++i) {
      Rng rng(derive_seed(master_seed, "augment", i,
                          static_cast<std::uint64_t>(copy)));
      out.push_back(augment_window(base[i], rng));
    }
  }
  return out;
}

}  // namespace puffline
