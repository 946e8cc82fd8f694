#pragma once

// Binary classification metrics and Welch's two-sample t-test.

#include <cstddef>
#include <span>

namespace hermes::metrics {

struct EvalResult {
  double auroc = 0.0;
  double auprc = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

// Probability that a random positive outscores a random negative, ties
// counted one half (rank/Mann-Whitney form). Throws UndefinedMetricError
// unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision: sum over distinct score thresholds (descending) of
// (recall gain) x precision. Tied scores form one threshold. Throws
// UndefinedMetricError without positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

// Positive prediction iff score >= threshold; 0 when precision + recall = 0.
double f1(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

EvalResult evaluate(std::span<const double> scores, std::span<const int> labels,
                    double threshold = 0.5);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

// Welch's unequal-variance t-test, two-sided. Each group needs >= 2 values.
TTest two_sample_t(std::span<const double> a, std::span<const double> b);

}  // namespace hermes::metrics
