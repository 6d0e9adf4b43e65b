#include "puffline/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "puffline/rng.hpp"

namespace puffline {

namespace {

// Single smooth lobe, zero at both ends.
double bump(double u) { return 0.5 * (1.0 - std::cos(2.0 * M_PI * u)); }

struct PuffPlan {
  double start = 0.0;
  double end = 0.0;       // annotated end: hand back at rest
  double settle = 0.3;    // motion stops settle seconds before the end
  double raise_s = 0.8;
  double lower_s = 0.8;
  double amp = 1.0;
};

struct SessionPlan {
  double start = 0.0;
  double end = 0.0;
  std::vector<PuffPlan> puffs;
};

struct SubjectScales {
  double ax = 1.0, az = 1.0, gx = 1.0, gy = 1.0;
};

SessionPlan plan_session(const SynthConfig& cfg, double sigma, Rng& rng) {
  SessionPlan plan;
  const int n_puffs =
      cfg.puffs_min +
      static_cast<int>(rng.uniform_index(
          static_cast<std::uint64_t>(cfg.puffs_max - cfg.puffs_min + 1)));

  std::vector<double> durations(static_cast<std::size_t>(n_puffs));
  for (auto& d : durations) {
    d = cfg.puff_duration_median_s * std::exp(sigma * rng.normal());
  }
  std::vector<double> rests(static_cast<std::size_t>(n_puffs) + 1);
  double required = 0.0;
  for (auto& r : rests) {
    r = rng.uniform(2.5, 6.5);
    required += r;
  }
  for (double d : durations) required += d;

  double target = rng.normal(cfg.session_duration_mean_s,
                             cfg.session_duration_std_s);
  target = std::max(target, required);

  // Spread the slack over the rest slots.
  std::vector<double> weights(rests.size());
  double wsum = 0.0;
  for (auto& w : weights) {
    w = rng.uniform(0.0, 1.0);
    wsum += w;
  }
  const double slack = target - required;
  if (wsum > 0.0) {
    for (std::size_t i = 0; i < rests.size(); ++i) {
      rests[i] += slack * weights[i] / wsum;
    }
  }

  double cursor = rests[0];
  for (int k = 0; k < n_puffs; ++k) {
    PuffPlan p;
    p.start = cursor;
    p.end = cursor + durations[static_cast<std::size_t>(k)];
    p.settle = rng.uniform(0.2, 0.5);
    const double motion = std::max(0.8, p.end - p.start - p.settle);
    p.raise_s = std::min(0.9, 0.3 * motion) * rng.uniform(0.85, 1.15);
    p.lower_s = std::min(0.9, 0.3 * motion) * rng.uniform(0.85, 1.15);
    p.amp = rng.uniform(0.85, 1.15);
    plan.puffs.push_back(p);
    cursor = p.end + rests[static_cast<std::size_t>(k) + 1];
  }
  plan.start = 0.0;
  plan.end = cursor;
  return plan;
}

void render_gesture(Eigen::MatrixXd& samples, double fs, double t_offset,
                    const PuffPlan& p, const SubjectScales& sc,
                    double gesture_amp) {
  const double a_peak = gesture_amp * p.amp;
  const double g_peak = 25.0 * gesture_amp * p.amp;
  const double motion_start = t_offset + p.start;
  const double motion_end = t_offset + p.end - p.settle;
  const double raise_end = motion_start + p.raise_s;
  const double lower_start = motion_end - p.lower_s;

  const auto m = samples.rows();
  const auto idx_lo =
      std::max<Eigen::Index>(0, static_cast<Eigen::Index>(motion_start * fs));
  const auto idx_hi = std::min<Eigen::Index>(
      m, static_cast<Eigen::Index>(motion_end * fs) + 1);
  for (Eigen::Index i = idx_lo; i < idx_hi; ++i) {
    const double t = static_cast<double>(i) / fs;
    if (t < motion_start || t > motion_end) continue;
    if (t <= raise_end) {
      const double u = (t - motion_start) / p.raise_s;
      samples(i, kAx) += a_peak * sc.ax * bump(u);
      samples(i, kAz) += 0.6 * a_peak * sc.az * bump(u);
      samples(i, kGy) += g_peak * sc.gy * bump(u);
      samples(i, kGx) += 0.5 * g_peak * sc.gx * bump(u);
    } else if (t >= lower_start) {
      const double u = (t - lower_start) / p.lower_s;
      samples(i, kAx) -= a_peak * sc.ax * bump(u);
      samples(i, kAz) -= 0.5 * a_peak * sc.az * bump(u);
      samples(i, kGy) -= g_peak * sc.gy * bump(u);
      samples(i, kGx) -= 0.5 * g_peak * sc.gx * bump(u);
    } else {
      // Hold: light tremor while the cigarette is at the mouth.
      const double span = lower_start - raise_end;
      if (span > 0.0) {
        const double v = (t - raise_end) / span;
        samples(i, kAy) +=
            0.12 * a_peak * std::sin(2.0 * M_PI * 2.2 * (t - raise_end)) *
            bump(v);
      }
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects < 1) throw std::invalid_argument("synth: n_subjects < 1");
  if (sessions_per_subject < 1) {
    throw std::invalid_argument("synth: sessions_per_subject < 1");
  }
  if (puffs_min < 1 || puffs_max < puffs_min) {
    throw std::invalid_argument("synth: bad puffs_per_session range");
  }
  if (puff_duration_median_s <= 0.0 || puff_duration_std_s <= 0.0) {
    throw std::invalid_argument("synth: puff duration must be positive");
  }
  if (session_duration_mean_s <= 0.0 || session_duration_std_s < 0.0) {
    throw std::invalid_argument("synth: session duration must be positive");
  }
  if (inter_session_gap_s <= 0.0) {
    throw std::invalid_argument("synth: inter_session_gap_s <= 0");
  }
  if (gap_jitter_s < 0.0 || lead_s < 0.0) {
    throw std::invalid_argument("synth: negative gap jitter or lead");
  }
  if (noise_amplitude < 0.0 || gesture_amplitude < 0.0) {
    throw std::invalid_argument("synth: negative amplitude");
  }
  if (sample_rate_hz <= 0.0) throw std::invalid_argument("synth: fs <= 0");
}

double lognormal_sigma(double median, double stddev) {
  const double ratio = (stddev * stddev) / (median * median);
  const double v = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * ratio));
  return std::sqrt(std::log(v));
}

std::vector<SubjectData> generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const double sigma =
      lognormal_sigma(cfg.puff_duration_median_s, cfg.puff_duration_std_s);
  const double fs = cfg.sample_rate_hz;

  std::vector<SubjectData> dataset;
  dataset.reserve(static_cast<std::size_t>(cfg.n_subjects));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    Rng rng(derive_seed(cfg.seed, "synth-subject",
                        static_cast<std::uint64_t>(s)));
    SubjectScales scales;
    scales.ax = rng.uniform(0.8, 1.2);
    scales.az = rng.uniform(0.8, 1.2);
    scales.gx = rng.uniform(0.8, 1.2);
    scales.gy = rng.uniform(0.8, 1.2);

    // Lay out sessions on a local timeline starting at zero.
    std::vector<SessionPlan> sessions;
    double cursor = cfg.lead_s;
    for (int k = 0; k < cfg.sessions_per_subject; ++k) {
      SessionPlan plan = plan_session(cfg, sigma, rng);
      const double duration = plan.end;
      plan.start = cursor;
      plan.end = cursor + duration;
      for (auto& p : plan.puffs) {
        p.start += cursor;
        p.end += cursor;
      }
      sessions.push_back(std::move(plan));
      cursor += duration;
      if (k + 1 < cfg.sessions_per_subject) {
        cursor += cfg.inter_session_gap_s + rng.uniform(0.0, cfg.gap_jitter_s);
      }
    }
    double total = cursor + cfg.lead_s;
    if (cfg.recording_length_s > 0.0) {
      if (total > cfg.recording_length_s) {
        throw std::invalid_argument(
            "synth: sessions do not fit into recording_length_s");
      }
      total = cfg.recording_length_s;
    }
    const auto m = static_cast<Eigen::Index>(std::llround(total * fs));

    Recording rec;
    rec.sample_rate_hz = fs;
    rec.start_epoch_s = 1.6e9 + 1e6 * static_cast<double>(s);
    char sid[16];
    std::snprintf(sid, sizeof(sid), "S%02d", s + 1);
    rec.subject_id = sid;
    rec.wrist = WristSide::Right;
    rec.samples = Eigen::MatrixXd::Zero(m, kChannels);

    // Background: slow AR(1) drift plus a white floor on every channel.
    const double alpha = std::exp(-2.0 * M_PI * 0.25 / fs);
    const double drift_sigma = std::sqrt(1.0 - alpha * alpha);
    for (int ch = 0; ch < kChannels; ++ch) {
      const double amp =
          (ch <= kAz ? 1.0 : 15.0) * cfg.noise_amplitude;
      double drift = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        drift = alpha * drift + drift_sigma * rng.normal();
        rec.samples(i, ch) = amp * (drift + 0.3 * rng.normal());
      }
    }
    rec.samples.col(kAz).array() += 9.81;  // gravity along the watch face

    RecordingAnnotations annot;
    for (const auto& session : sessions) {
      annot.sessions.push_back({rec.start_epoch_s + session.start,
                                rec.start_epoch_s + session.end});
      for (const auto& p : session.puffs) {
        render_gesture(rec.samples, fs, 0.0, p, scales,
                       cfg.gesture_amplitude);
        annot.puffs.push_back({rec.start_epoch_s + p.start,
                               rec.start_epoch_s + p.end});
      }
    }

    if (s % 2 == 1) {
      // Store odd subjects in the left-wrist frame.
      rec.samples.col(kAx) = -rec.samples.col(kAx).eval();
      rec.samples.col(kGy) = -rec.samples.col(kGy).eval();
      rec.samples.col(kGz) = -rec.samples.col(kGz).eval();
      rec.wrist = WristSide::Left;
    }

    SubjectData subject;
    subject.subject_id = rec.subject_id;
    subject.recordings.push_back({std::move(rec), std::move(annot)});
    dataset.push_back(std::move(subject));
  }
  return dataset;
}

}  // namespace puffline
