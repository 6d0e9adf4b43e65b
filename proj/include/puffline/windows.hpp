#pragma once

#include <cstdint>
#include <vector>

#include "puffline/rng.hpp"
#include "puffline/types.hpp"

namespace puffline {

// Window labels. kUnlabeled marks freshly extracted windows.
inline constexpr int kLabelPositive = +1;
inline constexpr int kLabelNegative = -1;
inline constexpr int kUnlabeled = 0;

// Fixed-length 6-channel slice. end_epoch_s is the time of the window's right
// edge (start + (offset + length) / fs), which the labeling rule compares
// against annotated puff ends.
struct Window {
  Eigen::MatrixXd data;  // w_l x 6
  double end_epoch_s = 0.0;
  int label = kUnlabeled;
};

enum class RotationAxis { X, Z };

struct WindowingParams {
  double win_len_s = 4.5;
  double step_s = 0.5;
  double label_epsilon_s = 1.5;
};

// Sliding windows at sample offsets 0, step, 2*step, ... A recording shorter
// than one window yields an empty list.
std::vector<Window> extract_windows(const Recording& rec,
                                    double win_len_s = 4.5,
                                    double step_s = 0.5);

// Window count for a recording of m samples; exposed for property tests.
Eigen::Index window_count(Eigen::Index m, Eigen::Index win_len,
                          Eigen::Index step);

// +1 iff some puff end lies within epsilon_s of end_epoch_s (inclusive).
// puffs must be sorted by end time.
int label_window(double end_epoch_s, const std::vector<PuffAnnotation>& puffs,
                 double epsilon_s = 1.5);

// Right-handed rotation about the given axis; R_x(90 deg) maps (0,1,0) to
// (0,0,1).
Eigen::Matrix3d rotation_matrix(RotationAxis axis, double angle_deg);

// Applies one rotation to the acceleration and gyro triples of every sample;
// label and timestamp are preserved.
Window rotate_window(const Window& w, const Eigen::Matrix3d& rotation);

// Random smartwatch-misplacement rotation: draws theta_x, theta_z ~ N(0, 10^2)
// degrees, picks one of {Rx, Rz, Rz*Rx, Rx*Rz} uniformly, and applies it to
// the acceleration and gyro triples of every sample.
Window augment_window(const Window& w, Rng& rng);

// Extracts and labels windows from every preprocessed recording, then appends
// augment_factor independently re-drawn augmented copies per kept window.
// negative_ratio > 0 keeps at most negative_ratio * n_positive negative
// windows (seeded subsample); 0 keeps all.
std::vector<Window> build_training_set(
    const std::vector<AnnotatedRecording>& recs, int augment_factor,
    std::uint64_t master_seed, const WindowingParams& params = {},
    double negative_ratio = 0.0);

}  // namespace puffline
