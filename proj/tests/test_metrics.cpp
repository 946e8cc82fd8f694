#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hermes/errors.hpp"
#include "hermes/metrics.hpp"
#include "oracles.hpp"

using namespace hermes;
using namespace hermes::metrics;

namespace {

using Scores = std::vector<double>;
using Labels = std::vector<int>;

// Random scores on a coarse grid so ties are common; both classes present.
void random_case(std::mt19937_64& rng, Scores& s, Labels& y, bool coarse) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
  s.resize(n);
  y.resize(n);
  std::uniform_int_distribution<int> grid(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  do {
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? grid(rng) / 10.0 : u(rng);
      y[i] = coin(rng) ? 1 : 0;
    }
  } while (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0);
}

}  // namespace

TEST_CASE("auroc examples") {
  CHECK(auroc(Scores{0.1, 0.4, 0.35, 0.8}, Labels{0, 0, 1, 1}) == 0.75);
  CHECK(auroc(Scores{0.1, 0.2, 0.8, 0.9}, Labels{0, 0, 1, 1}) == 1.0);
  CHECK(auroc(Scores{0.3, 0.3, 0.3, 0.3}, Labels{1, 0, 1, 0}) == 0.5);
  CHECK_THROWS_AS(auroc(Scores{0.1, 0.2}, Labels{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(auroc(Scores{0.1, 0.2}, Labels{0, 0}), UndefinedMetricError);
}

TEST_CASE("auprc examples") {
  CHECK(auprc(Scores{0.9, 0.1}, Labels{1, 0}) == 1.0);
  CHECK(auprc(Scores{0.9, 0.1}, Labels{0, 1}) == 0.5);
  CHECK_THROWS_AS(auprc(Scores{0.9, 0.1}, Labels{0, 0}), UndefinedMetricError);
}

TEST_CASE("f1 examples") {
  // TP=1 FP=1 FN=1 TN=1
  CHECK(f1(Scores{0.9, 0.8, 0.2, 0.1}, Labels{1, 0, 1, 0}) == 0.5);
  CHECK(f1(Scores{0.9, 0.1}, Labels{1, 0}) == 1.0);
  CHECK(f1(Scores{0.2, 0.1}, Labels{1, 0}) == 0.0);
  CHECK(f1(Scores{0.5, 0.1}, Labels{1, 0}) == 1.0);  // threshold is inclusive
  const auto r = evaluate(Scores{0.9, 0.8, 0.2, 0.1, 0.7}, Labels{1, 0, 1, 0, 1});
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 1);
  CHECK(r.tp + r.fp + r.tn + r.fn == 5);
  CHECK(r.threshold == 0.5);
}

TEST_CASE("rank auroc and average precision match brute force") {
  std::mt19937_64 rng(1);
  Scores s;
  Labels y;
  for (int trial = 0; trial < 2000; ++trial) {
    random_case(rng, s, y, trial % 2 == 0);
    CHECK(std::fabs(auroc(s, y) - oracle::auroc(s, y)) < 1e-12);
    CHECK(std::fabs(auprc(s, y) - oracle::auprc(s, y)) < 1e-12);
    const auto r = evaluate(s, y);
    for (double m : {r.auroc, r.auprc, r.f1}) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
    }
    CHECK(r.tp + r.fp + r.tn + r.fn == s.size());
  }
}

TEST_CASE("auroc under monotone transforms and negation") {
  std::mt19937_64 rng(2);
  Scores s;
  Labels y;
  for (int trial = 0; trial < 500; ++trial) {
    random_case(rng, s, y, trial % 2 == 0);
    Scores t(s.size()), neg(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      t[i] = std::exp(3.0 * s[i]) - 7.0;
      neg[i] = -s[i];
    }
    CHECK(auroc(t, y) == auroc(s, y));
    if (trial % 2 == 1) CHECK(std::fabs(auroc(s, y) + auroc(neg, y) - 1.0) < 1e-12);
  }
}

TEST_CASE("average precision of random scores tracks prevalence") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double prevalence : {0.1, 0.3, 0.5}) {
    std::bernoulli_distribution coin(prevalence);
    Scores s(10000);
    Labels y(10000);
    double positives = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = u(rng);
      y[i] = coin(rng) ? 1 : 0;
      positives += y[i];
    }
    CHECK(std::fabs(auprc(s, y) - positives / 10000.0) < 0.05);
  }
}

TEST_CASE("welch t-test") {
  SUBCASE("identical groups") {
    const auto r = two_sample_t(Scores{0.8, 0.82, 0.79}, Scores{0.8, 0.82, 0.79});
    CHECK(r.t == 0.0);
    CHECK(r.p == doctest::Approx(1.0));
    const auto flat = two_sample_t(Scores{0.5, 0.5}, Scores{0.5, 0.5, 0.5});
    CHECK(flat.p == 1.0);
  }
  SUBCASE("separated groups") {
    const auto r = two_sample_t(Scores{0, 0.001, -0.001}, Scores{1, 1.001, 0.999});
    CHECK(r.p < 0.01);
    CHECK(r.t == doctest::Approx(-1224.7448713916226).epsilon(1e-9));
    CHECK(r.df == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(2.6666548148560044e-12).epsilon(1e-6));
  }
  SUBCASE("unequal variances and sizes") {
    const auto r = two_sample_t(Scores{1, 2, 3, 4}, Scores{2, 4, 6, 8, 10});
    CHECK(r.t == doctest::Approx(-2.2514363231593695).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(5.520787746170677).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.06913359319239236).epsilon(1e-9));
    const auto swapped = two_sample_t(Scores{2, 4, 6, 8, 10}, Scores{1, 2, 3, 4});
    CHECK(swapped.t == -r.t);
    CHECK(swapped.p == r.p);
  }
  SUBCASE("too few values") { CHECK_THROWS(two_sample_t(Scores{1}, Scores{1, 2})); }
}
