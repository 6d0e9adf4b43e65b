#include "puffline/eval.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace puffline {

namespace {

void validate_gt(const GtIntervals& gt) {
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].end < gt[i].start) {
      throw std::invalid_argument("gt interval with end < start");
    }
    if (i > 0 && gt[i].start < gt[i - 1].end) {
      throw std::invalid_argument("gt intervals must be sorted, non-overlapping");
    }
  }
}

// Index of the first interval containing t, or -1. Boundaries inclusive.
int containing_interval(const GtIntervals& gt, double t) {
  auto it = std::upper_bound(
      gt.begin(), gt.end(), t,
      [](double v, const Interval& iv) { return v < iv.start; });
  if (it == gt.begin()) return -1;
  --it;
  if (t >= it->start && t <= it->end) {
    return static_cast<int>(it - gt.begin());
  }
  return -1;
}

// First-in-interval matching shared by the puff and session schemes.
Confusion match_events(const std::vector<double>& events,
                       const GtIntervals& gt) {
  validate_gt(gt);
  Confusion c;
  std::vector<bool> matched(gt.size(), false);
  for (double t : events) {
    const int idx = containing_interval(gt, t);
    if (idx < 0) {
      ++c.fp;
    } else if (matched[static_cast<std::size_t>(idx)]) {
      ++c.fp;
    } else {
      matched[static_cast<std::size_t>(idx)] = true;
      ++c.tp;
    }
  }
  c.fn = static_cast<long>(gt.size()) - c.tp;
  return c;
}

// Measure of the union of a sorted set of intervals.
double union_measure(std::vector<Interval> intervals) {
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) {
              return a.start < b.start;
            });
  double total = 0.0;
  double cur_start = 0.0, cur_end = 0.0;
  bool open = false;
  for (const auto& iv : intervals) {
    if (!open) {
      cur_start = iv.start;
      cur_end = iv.end;
      open = true;
    } else if (iv.start <= cur_end) {
      cur_end = std::max(cur_end, iv.end);
    } else {
      total += cur_end - cur_start;
      cur_start = iv.start;
      cur_end = iv.end;
    }
  }
  if (open) total += cur_end - cur_start;
  return total;
}

// Measure of the intersection of two interval unions via a sweep.
double intersection_measure(std::vector<Interval> a, std::vector<Interval> b) {
  auto by_start = [](const Interval& x, const Interval& y) {
    return x.start < y.start;
  };
  std::sort(a.begin(), a.end(), by_start);
  std::sort(b.begin(), b.end(), by_start);
  double total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].start, b[j].start);
    const double hi = std::min(a[i].end, b[j].end);
    if (hi > lo) total += hi - lo;
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

}  // namespace

Confusion& Confusion::operator+=(const Confusion& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  if (tn.has_value() && other.tn.has_value()) {
    *tn += *other.tn;
  } else if (other.tn.has_value()) {
    tn = other.tn;
  }
  return *this;
}

Confusion evaluate_puffs(const PuffSet& detections, const GtIntervals& gt) {
  std::vector<double> events = detections.timestamps;
  if (!std::is_sorted(events.begin(), events.end())) {
    throw std::invalid_argument("evaluate_puffs: detections must be sorted");
  }
  return match_events(events, gt);
}

Confusion window_confusion(const std::vector<int>& pred_labels,
                           const std::vector<int>& gt_labels) {
  if (pred_labels.size() != gt_labels.size()) {
    throw std::invalid_argument("window_confusion: length mismatch");
  }
  Confusion c;
  c.tn = 0;
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    const bool p = pred_labels[i] > 0;
    const bool g = gt_labels[i] > 0;
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++*c.tn;
  }
  return c;
}

double weighted_accuracy(const Confusion& c, double w) {
  if (!c.tn.has_value()) {
    throw std::invalid_argument("weighted_accuracy: tn is absent");
  }
  const double denom =
      (static_cast<double>(c.tp) + static_cast<double>(c.fn)) * w +
      static_cast<double>(c.fp) + static_cast<double>(*c.tn);
  if (denom <= 0.0) {
    throw std::invalid_argument("weighted_accuracy: zero denominator");
  }
  return (static_cast<double>(c.tp) * w + static_cast<double>(*c.tn)) / denom;
}

Confusion evaluate_sessions(const SessionSet& pred, const GtIntervals& gt) {
  std::vector<double> midpoints;
  midpoints.reserve(pred.intervals.size());
  double prev_start = -std::numeric_limits<double>::infinity();
  for (const auto& iv : pred.intervals) {
    if (iv.start < prev_start) {
      throw std::invalid_argument("evaluate_sessions: predictions must be sorted");
    }
    prev_start = iv.start;
    midpoints.push_back((iv.start + iv.end) / 2.0);
  }
  std::sort(midpoints.begin(), midpoints.end());
  return match_events(midpoints, gt);
}

double jaccard(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  const double inter = intersection_measure(a, b);
  const double uni = union_measure(a) + union_measure(b) - inter;
  if (uni <= 0.0) {
    // Degenerate unions (both empty or zero-length): equal iff both empty.
    return a.empty() == b.empty() ? 1.0 : 0.0;
  }
  return inter / uni;
}

double jaccard(const SessionSet& pred, const GtIntervals& gt) {
  return jaccard(pred.intervals, gt);
}

Prf prf(const Confusion& c) {
  Prf out;
  if (c.tp + c.fp > 0) {
    out.precision = static_cast<double>(c.tp) /
                    static_cast<double>(c.tp + c.fp);
  } else {
    out.degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    out.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    out.degenerate = true;
  }
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall /
             (out.precision + out.recall);
  } else {
    out.degenerate = true;
  }
  return out;
}

}  // namespace puffline
