#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "gradcheck.hpp"
#include "hermes/errors.hpp"
#include "hermes/tensor.hpp"

using namespace hermes;

namespace {

void check_values(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
  REQUIRE(t.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (tol == 0.0) CHECK(t.values()[i] == expected[i]);
    else CHECK(t.values()[i] == doctest::Approx(expected[i]).epsilon(tol));
  }
}

}  // namespace

TEST_CASE("matmul") {
  Tape tape(false);
  const auto i2 = Tensor::identity(2);
  const auto x = Tensor::of({{1, 2}, {3, 4}});
  check_values(matmul(tape, i2, x), {1, 2, 3, 4});
  check_values(matmul(tape, Tensor::of({{1, 2}}), Tensor::of({{3}, {4}})), {11});
  check_values(matmul(tape, Tensor::of({{1, 2}, {3, 4}}), Tensor::of({{5, 6}, {7, 8}})), {19, 22, 43, 50});
  CHECK_THROWS_AS(matmul(tape, Tensor::zeros(2, 3), Tensor::zeros(2, 3)), DimensionError);
}

TEST_CASE("pointwise ops") {
  Tape tape(false);
  check_values(add(tape, Tensor::of({{1, 2}}), Tensor::of({{0, 0}})), {1, 2});
  check_values(mul(tape, Tensor::of({{2, 3}}), Tensor::of({{4, 5}})), {8, 15});
  const auto x = Tensor::of({{0.3, -1.5}, {2.0, 7.0}});
  check_values(mul(tape, x, Tensor::ones(2, 2)), {0.3, -1.5, 2.0, 7.0});
  check_values(add(tape, x, Tensor::scalar(1.0)), {1.3, -0.5, 3.0, 8.0});
  check_values(sub(tape, x, x), {0, 0, 0, 0});
  CHECK_THROWS_AS(add(tape, Tensor::zeros(1, 2), Tensor::zeros(2, 1)), DimensionError);
  CHECK_THROWS_AS(mul(tape, Tensor::zeros(1, 2), Tensor::zeros(1, 3)), DimensionError);
  CHECK_THROWS_AS(add_row(tape, Tensor::zeros(3, 2), Tensor::zeros(1, 3)), DimensionError);
}

TEST_CASE("activations") {
  Tape tape(false);
  check_values(relu(tape, Tensor::of({{-1, 2}})), {0, 2});
  check_values(sigmoid(tape, Tensor::of({{0}})), {0.5});
  CHECK(sigmoid(tape, Tensor::of({{-6}})).item() == doctest::Approx(1.0 / (1.0 + std::exp(6.0))));
  CHECK(sigmoid(tape, Tensor::of({{-6}})).item() == doctest::Approx(0.00247262).epsilon(1e-5));
  const auto s = sigmoid(tape, Tensor::of({{-30, -2, 0, 2, 30}}));
  for (double v : s.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(tanh(tape, Tensor::of({{0}})).item() == 0.0);
  CHECK(activation_from_string("relu") == Activation::relu);
  CHECK_THROWS_AS(activation_from_string("gelu"), ConfigError);
}

TEST_CASE("row softmax") {
  Tape tape(false);
  check_values(row_softmax(tape, Tensor::of({{0, 0}})), {0.5, 0.5});
  check_values(row_softmax(tape, Tensor::of({{1000, 1000}})), {0.5, 0.5});
  check_values(row_softmax(tape, Tensor::of({{std::log(1.0), std::log(3.0)}})), {0.25, 0.75});

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = gradcheck::random(4, 6, rng, -20, 20, false);
    const auto y = row_softmax(tape, x);
    auto shifted = x.clone();
    for (std::size_t r = 0; r < 4; ++r) {
      const double shift = u(rng);
      for (std::size_t c = 0; c < 6; ++c) shifted.at(r, c) += shift;
    }
    const auto ys = row_softmax(tape, shifted);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        total += y.at(r, c);
        CHECK(std::fabs(y.at(r, c) - ys.at(r, c)) < 1e-12);
      }
      CHECK(std::fabs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("column max pool") {
  Tape tape(false);
  check_values(column_max_pool(tape, Tensor::of({{1, 5}, {3, 2}})), {3, 5});
  check_values(column_max_pool(tape, Tensor::of({{7, 8}})), {7, 8});
  CHECK_THROWS_AS(column_max_pool(tape, Tensor::zeros(0, 2)), DimensionError);

  auto ties = Tensor::of({{2, 2}, {2, 2}}, true);
  Tape rec;
  const auto pooled = column_max_pool(rec, ties);
  check_values(pooled, {2, 2});
  rec.backward(sum(rec, pooled));
  check_values(Tensor::from(2, 2, {ties.grad().begin(), ties.grad().end()}), {1, 1, 0, 0});
}

TEST_CASE("backward") {
  SUBCASE("linear functional") {
    auto x = Tensor::of({{1, 2}, {3, 4}}, true);
    Tape tape;
    tape.backward(sum(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("square") {
    auto x = Tensor::of({{3}}, true);
    Tape tape;
    tape.backward(sum(tape, mul(tape, x, x)));
    CHECK(x.grad_at(0, 0) == doctest::Approx(6.0));
  }
  SUBCASE("reuse accumulates") {
    auto x = Tensor::of({{1, -2}, {0.5, 4}}, true);
    Tape tape;
    tape.backward(add(tape, sum(tape, x), sum(tape, x)));
    for (double g : x.grad()) CHECK(g == 2.0);
  }
  SUBCASE("unreachable stays zero") {
    auto x = Tensor::of({{1, 2}}, true);
    auto unused = Tensor::of({{5, 6}}, true);
    Tape tape;
    const auto other = scale(tape, unused, 3.0);
    (void)other;
    tape.backward(sum(tape, x));
    for (double g : unused.grad()) CHECK(g == 0.0);
  }
  SUBCASE("non-scalar loss") {
    auto x = Tensor::of({{1, 2}}, true);
    Tape tape;
    const auto y = scale(tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  SUBCASE("gradients accumulate across tapes until zeroed") {
    auto x = Tensor::of({{1}}, true);
    for (int i = 0; i < 3; ++i) {
      Tape tape;
      tape.backward(sum(tape, x));
    }
    CHECK(x.grad_at(0, 0) == 3.0);
    x.zero_grad();
    CHECK(x.grad_at(0, 0) == 0.0);
  }
}

TEST_CASE("non-finite values name the op") {
  Tape tape(false);
  const auto big = Tensor::of({{1e308, 1e308}});
  try {
    (void)add(tape, big, big);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  const auto nan = Tensor::of({{std::numeric_limits<double>::quiet_NaN()}});
  CHECK_THROWS_AS(scale(tape, nan, 2.0), NumericError);
}

TEST_CASE("finite differences over every differentiable op") {
  using Build = std::function<Tensor(Tape&, const Tensor&, const Tensor&)>;
  struct Case {
    const char* name;
    std::size_t b_rows, b_cols;
    Build build;
  };
  const std::vector<std::size_t> picks = {2, 0, 2, 1};
  const std::vector<Case> cases = {
      {"matmul", 4, 3, [](Tape& t, const Tensor& a, const Tensor& b) { return matmul(t, a, b); }},
      {"transpose", 3, 4, [](Tape& t, const Tensor& a, const Tensor&) { return transpose(t, a); }},
      {"add", 3, 4, [](Tape& t, const Tensor& a, const Tensor& b) { return add(t, a, b); }},
      {"add broadcast", 1, 1, [](Tape& t, const Tensor& a, const Tensor& b) { return add(t, a, b); }},
      {"sub", 3, 4, [](Tape& t, const Tensor& a, const Tensor& b) { return sub(t, a, b); }},
      {"mul", 3, 4, [](Tape& t, const Tensor& a, const Tensor& b) { return mul(t, a, b); }},
      {"mul broadcast", 1, 1, [](Tape& t, const Tensor& a, const Tensor& b) { return mul(t, a, b); }},
      {"scale", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return scale(t, a, -1.7); }},
      {"add_scalar", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return add_scalar(t, a, 0.3); }},
      {"add_row", 1, 4, [](Tape& t, const Tensor& a, const Tensor& b) { return add_row(t, a, b); }},
      {"relu", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return relu(t, a); }},
      {"sigmoid", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return sigmoid(t, a); }},
      {"tanh", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return hermes::tanh(t, a); }},
      {"row_softmax", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return row_softmax(t, a); }},
      {"column_max_pool", 1, 1,
       [](Tape& t, const Tensor& a, const Tensor&) { return column_max_pool(t, a); }},
      {"concat_cols", 3, 2,
       [](Tape& t, const Tensor& a, const Tensor& b) {
         const Tensor parts[] = {a, b};
         return concat_cols(t, parts);
       }},
      {"concat_rows", 2, 4,
       [](Tape& t, const Tensor& a, const Tensor& b) {
         const Tensor parts[] = {a, b};
         return concat_rows(t, parts);
       }},
      {"gather_rows", 1, 1,
       [&picks](Tape& t, const Tensor& a, const Tensor&) { return gather_rows(t, a, picks); }},
      {"mean", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return mean(t, a); }},
      {"sum", 1, 1, [](Tape& t, const Tensor& a, const Tensor&) { return sum(t, a); }},
  };
  std::mt19937_64 rng(2024);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = gradcheck::random(3, 4, rng);
      const auto b = gradcheck::random(c.b_rows, c.b_cols, rng);
      Tape probe(false);
      const auto shape = c.build(probe, a, b);
      const auto w = gradcheck::random(shape.rows(), shape.cols(), rng, -1, 1, false);
      const auto result = gradcheck::check(
          [&](Tape& t) { return gradcheck::weighted_sum(t, c.build(t, a, b), w); }, {a, b});
      worst = std::max(worst, result.worst);
      if (!result.ok()) {
        INFO(result.where);
        CHECK(result.ok());
        break;
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("adamw") {
  SUBCASE("zero gradient and zero decay is a fixed point") {
    auto w = Tensor::of({{0.7, -1.2}}, true);
    AdamW opt({w}, {.learning_rate = 0.1, .weight_decay = 0.0});
    opt.step();
    check_values(w, {0.7, -1.2}, 0);
  }
  SUBCASE("descends on w^2") {
    auto w = Tensor::of({{1.0}}, true);
    AdamW opt({w}, {.learning_rate = 0.1, .weight_decay = 0.0});
    Tape tape;
    tape.backward(sum(tape, mul(tape, w, w)));
    opt.step();
    CHECK(std::fabs(w.item()) < 1.0);
    CHECK(w.grad_at(0, 0) == 0.0);
  }
  SUBCASE("decoupled decay alone") {
    auto w = Tensor::of({{1.0}}, true);
    AdamW opt({w}, {.learning_rate = 0.1, .weight_decay = 0.01});
    opt.step();
    CHECK(w.item() == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0).epsilon(1e-15));
  }
  SUBCASE("lr zero is the identity") {
    std::mt19937_64 rng(3);
    auto w = gradcheck::random(3, 4, rng);
    const auto before = w.detached();
    AdamW opt({w}, {.learning_rate = 0.0, .weight_decay = 0.5});
    for (int i = 0; i < 5; ++i) {
      Tape tape;
      tape.backward(sum(tape, mul(tape, w, w)));
      opt.step();
    }
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.values()[i] == before.values()[i]);
  }
  SUBCASE("first step moves by lr") {
    // bias-corrected first step is lr * g/|g| for every nonzero gradient
    auto w = Tensor::of({{0.5, -3.0}}, true);
    AdamW opt({w}, {.learning_rate = 0.01, .weight_decay = 0.0});
    Tape tape;
    tape.backward(sum(tape, mul(tape, w, w)));
    opt.step();
    CHECK(w.at(0, 0) == doctest::Approx(0.49).epsilon(1e-6));
    CHECK(w.at(0, 1) == doctest::Approx(-2.99).epsilon(1e-6));
    CHECK(opt.steps() == 1);
  }
  CHECK_THROWS_AS(AdamW({Tensor::zeros(1, 1)}, {}), ContractError);
}

TEST_CASE("dropout") {
  Rng rng(11);
  Tape tape(false);
  const auto x = Tensor::of({{1, 2, 3}});
  check_values(dropout(tape, x, 0.0, true, rng), {1, 2, 3});
  check_values(dropout(tape, x, 0.9, false, rng), {1, 2, 3});
  CHECK_THROWS_AS(dropout(tape, x, 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(dropout(tape, x, -0.1, true, rng), ConfigError);

  const auto ones = Tensor::full(1, 100000, 1.0);
  const auto y = dropout(tape, ones, 0.5, true, rng);
  double total = 0.0;
  std::size_t zeros = 0;
  for (double v : y.values()) {
    total += v;
    if (v == 0.0) ++zeros;
    else CHECK(v == 2.0);
  }
  const double m = total / 100000.0;
  CHECK(m >= 0.98);
  CHECK(m <= 1.02);
  CHECK(zeros > 0);
}

TEST_CASE("glorot init bounds") {
  Rng rng(5);
  const auto w = glorot_uniform(30, 10, rng);
  const double limit = std::sqrt(6.0 / 40.0);
  CHECK(w.requires_grad());
  for (double v : w.values()) CHECK(std::fabs(v) <= limit);
}
