#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fedcpf/metrics.hpp"
#include "reference_scores.hpp"

using namespace fedcpf;

namespace {

SaliencyFrame frame(std::size_t h, std::size_t w, double fill, std::size_t gr, std::size_t gc) {
  return SaliencyFrame{h, w, std::vector<double>(h * w, fill), gr, gc};
}

// Two-sided tail of Student's t by quadrature: substitute t = tan(u) so the
// infinite tail becomes [atan|t|, pi/2], then composite Simpson.
double t_two_sided_p(double t, double dof) {
  const double logc = std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2) - 0.5 * std::log(dof * M_PI);
  auto integrand = [&](double u) {
    if (u >= M_PI / 2) return 0.0;
    const double x = std::tan(u), sec = 1.0 / std::cos(u);
    return std::exp(logc - (dof + 1) / 2 * std::log1p(x * x / dof)) * sec * sec;
  };
  const double lo = std::atan(std::fabs(t)), hi = M_PI / 2;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double s = integrand(lo) + integrand(hi);
  for (int i = 1; i < n; ++i) s += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return 2.0 * s * h / 3.0;
}

}  // namespace

TEST(F1, ReproducesPublishedScores) {
  for (const auto& row : kReferenceScores) {
    EXPECT_NEAR(f1_score(row.recall, row.precision), row.f1, 0.01) << row.label;
  }
}

TEST(F1, SymmetricAndIdempotent) {
  EXPECT_DOUBLE_EQ(f1_score(30.0, 70.0), f1_score(70.0, 30.0));
  for (double x : {0.5, 12.0, 99.9}) EXPECT_DOUBLE_EQ(f1_score(x, x), x);
  EXPECT_EQ(f1_score(0.0, 0.0), 0.0);
  EXPECT_THROW(f1_score(-1.0, 5.0), ContractError);
}

TEST(FrameHit, StrictThreshold) {
  SaliencyFrame f = frame(4, 4, 0.0, 1, 2);
  EXPECT_FALSE(frame_hit(f, 0.7));
  f.map[1 * 4 + 2] = 0.8;
  EXPECT_TRUE(frame_hit(f, 0.7));
  f.map[1 * 4 + 2] = 0.7;
  EXPECT_FALSE(frame_hit(f, 0.7));
  f.gt_row = 4;
  EXPECT_THROW(frame_hit(f, 0.7), ContractError);
}

TEST(SaliencyRecallPrecision, Examples) {
  std::vector<SaliencyFrame> single_cell;
  for (int i = 0; i < 3; ++i) {
    SaliencyFrame f = frame(10, 10, 0.0, 4, 5);
    f.map[4 * 10 + 5] = 0.95;
    single_cell.push_back(f);
  }
  const MetricSummary s = saliency_recall_precision(single_cell);
  EXPECT_DOUBLE_EQ(s.recall, 100.0);
  EXPECT_DOUBLE_EQ(s.precision, 99.0);

  const std::vector<SaliencyFrame> misses{frame(3, 3, 0.1, 0, 0), frame(3, 3, 0.2, 2, 2)};
  const MetricSummary none = saliency_recall_precision(misses);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.f1, 0.0);

  SaliencyFrame half = frame(2, 2, 0.0, 0, 0);
  half.map = {0.9, 0.8, 0.1, 0.2};
  const std::vector<SaliencyFrame> mixed{half, frame(2, 2, 0.0, 1, 1)};
  const MetricSummary m = saliency_recall_precision(mixed);
  EXPECT_DOUBLE_EQ(m.recall, 50.0);
  EXPECT_DOUBLE_EQ(m.precision, 50.0);
  EXPECT_THROW(saliency_recall_precision(std::span<const SaliencyFrame>{}), ContractError);
}

TEST(SaliencyRecallPrecision, OrderInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SaliencyFrame> frames;
  for (int i = 0; i < 12; ++i) {
    SaliencyFrame f = frame(5, 5, 0.0, i % 5, (i * 2) % 5);
    for (double& v : f.map) v = u(rng);
    frames.push_back(f);
  }
  const MetricSummary a = saliency_recall_precision(frames);
  std::reverse(frames.begin(), frames.end());
  const MetricSummary b = saliency_recall_precision(frames);
  EXPECT_DOUBLE_EQ(a.recall, b.recall);
  EXPECT_NEAR(a.precision, b.precision, 1e-12);
  EXPECT_NEAR(a.f1, f1_score(a.recall, a.precision), 1e-12);
}

TEST(Classification, Examples) {
  const std::vector<std::size_t> y{0, 1, 2, 1, 0};
  const ClassificationMetrics perfect = classification_metrics(y, y, 3);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.macro_precision, 1.0);
  EXPECT_EQ(perfect.macro_recall, 1.0);
  EXPECT_EQ(perfect.macro_f1, 1.0);

  const std::vector<std::size_t> labels{0, 1, 0, 1}, constant{0, 0, 0, 0};
  const ClassificationMetrics c = classification_metrics(constant, labels, 2);
  EXPECT_DOUBLE_EQ(c.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(c.macro_recall, 0.5);

  // confusion rows (true class) [[2,0,0],[1,1,0],[0,0,2]]
  const std::vector<std::size_t> truth{0, 0, 1, 1, 2, 2}, pred{0, 0, 0, 1, 2, 2};
  const ClassificationMetrics m = classification_metrics(pred, truth, 3);
  EXPECT_DOUBLE_EQ(m.macro_recall, (1.0 + 0.5 + 1.0) / 3.0);
  EXPECT_DOUBLE_EQ(m.macro_precision, (2.0 / 3.0 + 1.0 + 1.0) / 3.0);
  EXPECT_THROW(classification_metrics(pred, labels, 3), ContractError);
}

TEST(Classification, AbsentClassesAreReported) {
  const std::vector<std::size_t> y{0, 0, 1};
  const ClassificationMetrics m = classification_metrics(y, y, 3);
  EXPECT_EQ(m.absent_classes, (std::vector<std::size_t>{2}));
  EXPECT_DOUBLE_EQ(m.macro_recall, 2.0 / 3.0);
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{1.0, 2.0, 4.0};
  const TTestResult r = welch_t_test(a, a);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  const std::vector<double> c{3, 3, 3};
  EXPECT_EQ(welch_t_test(c, c).p_value, 1.0);
  EXPECT_THROW(welch_t_test(std::vector<double>{1}, a), ContractError);
}

TEST(Welch, NearDegenerateSeparation) {
  const std::vector<double> a{1, 1, 1, 1}, b{2, 2, 2, 2.0001};
  const TTestResult r = welch_t_test(a, b);
  EXPECT_LT(r.p_value, 1e-3);
  const double oracle = t_two_sided_p(r.t_statistic, r.dof);
  EXPECT_NEAR(r.p_value, oracle, 1e-6 * oracle);
}

// scipy.stats.ttest_ind values, see tests/oracles/welch_reference.py
TEST(Welch, MatchesReferenceValues) {
  const std::vector<double> a{1.0, 2.5, 3.1, 4.7, 2.2}, b{2.9, 3.8, 5.5, 4.1};
  const TTestResult r = welch_t_test(a, b);
  EXPECT_NEAR(r.t_statistic, -1.695561476554452, 1e-12);
  EXPECT_NEAR(r.dof, 6.9949020685137535, 1e-10);
  EXPECT_NEAR(r.p_value, 0.13382044371731772, 1e-10);
  EXPECT_NEAR(r.p_value, t_two_sided_p(r.t_statistic, r.dof), 1e-9);
}

TEST(Welch, QuadratureAgreesAcrossRange) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(3 + trial % 5), b(4 + trial % 3);
    for (double& x : a) x = n01(rng);
    for (double& x : b) x = 0.3 * trial / 10.0 + 2.0 * n01(rng);
    const TTestResult r = welch_t_test(a, b);
    EXPECT_NEAR(r.p_value, t_two_sided_p(r.t_statistic, r.dof), 1e-9) << trial;
  }
}

TEST(Welch, EqualVariancesGiveClassicStatistic) {
  // both samples have variance 7, with different sizes
  const double d = std::sqrt(7.0);
  const std::vector<double> a{1.0, 2.0, 6.0}, b{9.0 - d, 9.0 - d, 9.0, 9.0 + d, 9.0 + d};
  const double va = sample_variance(a), vb = sample_variance(b);
  ASSERT_NEAR(va, vb, 1e-12);
  const double na = 3.0, nb = 5.0;
  const double sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2);
  const double classic = (sample_mean(a) - sample_mean(b)) / std::sqrt(sp2 * (1 / na + 1 / nb));
  EXPECT_NEAR(welch_t_test(a, b).t_statistic, classic, 1e-10);
}

TEST(Welch, CalibratedUnderTheNull) {
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> n01(0.0, 1.0);
  int rejections = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(10), b(10);
    for (double& x : a) x = n01(rng);
    for (double& x : b) x = n01(rng);
    rejections += welch_t_test(a, b).p_value < 0.05;
  }
  EXPECT_GE(rejections, 30);
  EXPECT_LE(rejections, 70);
}
