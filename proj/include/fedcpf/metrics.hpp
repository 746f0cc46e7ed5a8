#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "fedcpf/errors.hpp"
#include "fedcpf/param.hpp"

namespace fedcpf {

// Predicted saliency over an H x W grid with the ground-truth gaze cell.
struct SaliencyFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> map;  // row-major, values in [0, 1]
  std::size_t gt_row = 0;
  std::size_t gt_col = 0;

  double at(std::size_t r, std::size_t c) const { return map[r * width + c]; }
};

// Percentages, as reported in result tables.
struct MetricSummary {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t n_frames = 0;
  std::size_t n_hit = 0;
};

// Harmonic mean of two percentages; 0 when both are 0.
inline double f1_score(double recall, double precision) {
  detail::require(recall >= 0.0 && precision >= 0.0, "f1_score: negative input");
  if (recall + precision == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// The gaze point counts as covered only if its saliency is strictly above the threshold.
inline bool frame_hit(const SaliencyFrame& frame, double threshold) {
  detail::require(frame.map.size() == frame.height * frame.width, "frame_hit: map size mismatch");
  detail::require(frame.gt_row < frame.height && frame.gt_col < frame.width, "frame_hit: gt point outside grid");
  return frame.at(frame.gt_row, frame.gt_col) > threshold;
}

// recall    = share of frames whose gaze point is covered
// precision = over covered frames, mean of (1 - share of cells above threshold)
inline MetricSummary saliency_recall_precision(std::span<const SaliencyFrame> frames, double threshold = 0.7) {
  detail::require(!frames.empty(), "saliency_recall_precision: no frames");
  MetricSummary s;
  s.n_frames = frames.size();
  double precision_sum = 0.0;
  for (const auto& f : frames) {
    if (!frame_hit(f, threshold)) continue;
    ++s.n_hit;
    std::size_t above = 0;
    for (double v : f.map) above += v > threshold ? 1 : 0;
    precision_sum += 1.0 - static_cast<double>(above) / static_cast<double>(f.map.size());
  }
  s.recall = 100.0 * static_cast<double>(s.n_hit) / static_cast<double>(s.n_frames);
  s.precision = s.n_hit ? 100.0 * precision_sum / static_cast<double>(s.n_hit) : 0.0;
  s.f1 = f1_score(s.recall, s.precision);
  return s;
}

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::size_t> absent_classes;  // classes with no true samples; they score 0
};

// Fractions in [0, 1]. Macro averages run over all n_classes.
inline ClassificationMetrics classification_metrics(std::span<const std::size_t> predictions,
                                                    std::span<const std::size_t> labels, std::size_t n_classes) {
  detail::require_same_length(predictions.size(), labels.size(), "classification_metrics");
  detail::require(!labels.empty(), "classification_metrics: empty input");
  detail::require(n_classes >= 1, "classification_metrics: n_classes must be >= 1");

  std::vector<std::size_t> tp(n_classes, 0), predicted(n_classes, 0), actual(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    detail::require(labels[n] < n_classes && predictions[n] < n_classes, "classification_metrics: class out of range");
    ++predicted[predictions[n]];
    ++actual[labels[n]];
    if (predictions[n] == labels[n]) {
      ++tp[labels[n]];
      ++correct;
    }
  }

  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (actual[c] == 0) {
      m.absent_classes.push_back(c);
      continue;
    }
    const double p = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double r = static_cast<double>(tp[c]) / static_cast<double>(actual[c]);
    m.macro_precision += p;
    m.macro_recall += r;
    m.macro_f1 += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  const double k = static_cast<double>(n_classes);
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.macro_f1 /= k;
  return m;
}

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  double dof = 0.0;
};

inline double sample_mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> xs) {
  const double m = sample_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

// Two-sided Welch unequal-variance t-test, Welch-Satterthwaite degrees of freedom.
inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() >= 2 && b.size() >= 2, "welch_t_test: each sample needs at least 2 values");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = sample_mean(a), mb = sample_mean(b);
  const double sa = sample_variance(a) / na;
  const double sb = sample_variance(b) / nb;
  const double se2 = sa + sb;

  TTestResult r;
  if (se2 == 0.0) {
    // both samples constant
    if (ma == mb) return r;
    r.t_statistic = ma > mb ? INFINITY : -INFINITY;
    r.p_value = 0.0;
    return r;
  }
  r.t_statistic = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  const boost::math::students_t_distribution<double> dist(r.dof);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_statistic)));
  if (r.p_value > 1.0) r.p_value = 1.0;
  return r;
}

}  // namespace fedcpf
