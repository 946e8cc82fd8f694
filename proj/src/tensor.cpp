#include "hermes/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hermes/errors.hpp"

namespace hermes {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat view(const Tensor& t) {
  return ConstMapMat(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MapMat grad_view(const Tensor& t) {
  return MapMat(t.grad().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

// Output handle for an op over `inputs`; gradient buffer only when recording.
Tensor make_output(Tape& tape, std::size_t rows, std::size_t cols, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs) {
  return Tensor::from(rows, cols, std::move(values), tape.needs_grad(inputs));
}

double apply_activation(Activation kind, double x) {
  switch (kind) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Activation::tanh:
      return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the input x and output y.
double activation_slope(Activation kind, double x, double y) {
  switch (kind) {
    case Activation::identity:
      return 1.0;
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::tanh:
      return 1.0 - y * y;
  }
  return 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return full(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  return from(rows, cols, std::vector<double>(rows * cols, value), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(1, 1, {value}, requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  auto s = std::make_shared<Storage>();
  s->rows = rows;
  s->cols = cols;
  s->values.assign(values.begin(), values.end());
  s->requires_grad = requires_grad;
  if (requires_grad) s->grad.assign(rows * cols, 0.0);
  return Tensor(std::move(s));
}

Tensor Tensor::of(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("tensor literal: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from(r, c, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string());
  }
  return data_->values[0];
}

void Tensor::zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), 0.0); }

Tensor Tensor::detached() const { return from(rows(), cols(), {data_->values.begin(), data_->values.end()}, false); }

Tensor Tensor::clone() const { return from(rows(), cols(), {data_->values.begin(), data_->values.end()}, requires_grad()); }

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(' << rows() << 'x' << cols() << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tape

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

bool Tape::needs_grad(std::span<const Tensor> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::record(const char* op, Tensor output, std::function<void()> backward) {
  if (!recording_ || !output.requires_grad()) return;
  ops_.push_back(Op{op, std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + loss.shape_string());
  }
  if (backward_done_) throw ContractError("backward: tape already consumed");
  const auto it = std::find_if(ops_.rbegin(), ops_.rend(),
                               [&](const Op& op) { return op.output.same_storage(loss); });
  if (it == ops_.rend()) throw ContractError("backward: loss was not produced on this tape");
  backward_done_ = true;
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto op = it; op != ops_.rend(); ++op) op->backward();
}

// ---------------------------------------------------------------------------
// Helpers

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
  }
  return "identity";
}

void require_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op + " " +
                         t.shape_string());
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Tensor result = Tensor::zeros(a.rows(), b.cols(), tape.needs_grad({&a, &b}));
  MapMat(result.values().data(), static_cast<Eigen::Index>(a.rows()),
         static_cast<Eigen::Index>(b.cols()))
      .noalias() = view(a) * view(b);
  require_finite(result, "matmul");
  tape.record("matmul", result, [a, b, result]() mutable {
    const auto g = grad_view(result);
    if (a.requires_grad()) grad_view(a).noalias() += g * view(b).transpose();
    if (b.requires_grad()) grad_view(b).noalias() += view(a).transpose() * g;
  });
  return result;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  Tensor result = Tensor::zeros(a.cols(), a.rows(), tape.needs_grad({&a}));
  MapMat(result.values().data(), static_cast<Eigen::Index>(a.cols()),
         static_cast<Eigen::Index>(a.rows())) = view(a).transpose();
  tape.record("transpose", result, [a, result]() mutable {
    grad_view(a) += grad_view(result).transpose();
  });
  return result;
}

namespace {

enum class Binary { add, sub, mul };

Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  const bool broadcast = b.rows() == 1 && b.cols() == 1 && a.size() != 1;
  if (!broadcast && (a.rows() != b.rows() || a.cols() != b.cols())) shape_error(name, a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = broadcast ? bv[0] : bv[i];
    switch (kind) {
      case Binary::add:
        out[i] = av[i] + y;
        break;
      case Binary::sub:
        out[i] = av[i] - y;
        break;
      case Binary::mul:
        out[i] = av[i] * y;
        break;
    }
  }
  Tensor result = make_output(tape, a.rows(), a.cols(), std::move(out), {&a, &b});
  require_finite(result, name);
  tape.record(name, result, [a, b, result, kind, broadcast]() mutable {
    const auto g = result.grad();
    const auto av = a.values();
    const auto bv = b.values();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += kind == Binary::mul ? g[i] * (broadcast ? bv[0] : bv[i]) : g[i];
      }
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = g[i];
        if (kind == Binary::sub) d = -d;
        if (kind == Binary::mul) d *= av[i];
        gb[broadcast ? 0 : i] += d;
      }
    }
  });
  return result;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, Binary::add, "add");
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, Binary::sub, "sub");
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, Binary::mul, "mul");
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  Tensor result = make_output(tape, a.rows(), a.cols(), std::move(out), {&a});
  require_finite(result, "scale");
  tape.record("scale", result, [a, result, factor]() mutable {
    grad_view(a) += factor * grad_view(result);
  });
  return result;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double offset) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v += offset;
  Tensor result = make_output(tape, a.rows(), a.cols(), std::move(out), {&a});
  require_finite(result, "add_scalar");
  tape.record("add_scalar", result, [a, result]() mutable { grad_view(a) += grad_view(result); });
  return result;
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_error("add_row", a, bias);
  std::vector<double> out(a.size());
  MapMat(out.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols())) =
      view(a).rowwise() + view(bias).row(0);
  Tensor result = make_output(tape, a.rows(), a.cols(), std::move(out), {&a, &bias});
  require_finite(result, "add_row");
  tape.record("add_row", result, [a, bias, result]() mutable {
    const auto g = grad_view(result);
    if (a.requires_grad()) grad_view(a) += g;
    if (bias.requires_grad()) grad_view(bias) += g.colwise().sum();
  });
  return result;
}

Tensor activation(Tape& tape, const Tensor& a, Activation kind) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply_activation(kind, av[i]);
  Tensor result = make_output(tape, a.rows(), a.cols(), std::move(out), {&a});
  require_finite(result, "activation");
  tape.record("activation", result, [a, result, kind]() mutable {
    const auto g = result.grad();
    const auto x = a.values();
    const auto y = result.values();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * activation_slope(kind, x[i], y[i]);
  });
  return result;
}

Tensor row_softmax(Tape& tape, const Tensor& a) {
  const std::size_t n = a.rows();
  const std::size_t k = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = a.values().data() + r * k;
    double* y = out.data() + r * k;
    const double shift = k == 0 ? 0.0 : *std::max_element(x, x + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += (y[c] = std::exp(x[c] - shift));
    for (std::size_t c = 0; c < k; ++c) y[c] /= total;
  }
  Tensor result = make_output(tape, n, k, std::move(out), {&a});
  require_finite(result, "row_softmax");
  tape.record("row_softmax", result, [a, result, n, k]() mutable {
    const auto g = result.grad();
    const auto y = result.values();
    auto ga = a.grad();
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += g[r * k + c] * y[r * k + c];
      for (std::size_t c = 0; c < k; ++c) ga[r * k + c] += y[r * k + c] * (g[r * k + c] - dot);
    }
  });
  return result;
}

Tensor column_max_pool(Tape& tape, const Tensor& a) {
  if (a.rows() == 0) throw DimensionError("column_max_pool: empty input " + a.shape_string());
  const std::size_t k = a.cols();
  std::vector<double> out(k);
  std::vector<std::size_t> argmax(k, 0);
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = a.at(0, c);
    for (std::size_t r = 1; r < a.rows(); ++r) {
      if (a.at(r, c) > out[c]) {
        out[c] = a.at(r, c);
        argmax[c] = r;
      }
    }
  }
  Tensor result = make_output(tape, 1, k, std::move(out), {&a});
  require_finite(result, "column_max_pool");
  tape.record("column_max_pool", result, [a, result, argmax = std::move(argmax), k]() mutable {
    const auto g = result.grad();
    auto ga = a.grad();
    for (std::size_t c = 0; c < k; ++c) ga[argmax[c] * k + c] += g[c];
  });
  return result;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) shape_error("concat_cols", parts[0], p);
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(p.values().data() + r * p.cols(), p.cols(), out.data() + r * total + offset);
    }
    offset += p.cols();
  }
  Tensor result = Tensor::from(n, total, std::move(out), tape.needs_grad(parts));
  tape.record("concat_cols", result,
              [inputs = std::vector<Tensor>(parts.begin(), parts.end()), result, n,
               total]() mutable {
                const auto g = result.grad();
                std::size_t offset = 0;
                for (auto& p : inputs) {
                  if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t c = 0; c < p.cols(); ++c) {
                        gp[r * p.cols() + c] += g[r * total + offset + c];
                      }
                    }
                  }
                  offset += p.cols();
                }
              });
  return result;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t k = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != k) shape_error("concat_rows", parts[0], p);
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * k);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor result = Tensor::from(total, k, std::move(out), tape.needs_grad(parts));
  tape.record("concat_rows", result,
              [inputs = std::vector<Tensor>(parts.begin(), parts.end()), result]() mutable {
                const auto g = result.grad();
                std::size_t offset = 0;
                for (auto& p : inputs) {
                  if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[offset + i];
                  }
                  offset += p.size();
                }
              });
  return result;
}

Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t k = a.cols();
  std::vector<double> out(rows.size() * k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           a.shape_string());
    }
    std::copy_n(a.values().data() + rows[i] * k, k, out.data() + i * k);
  }
  Tensor result = make_output(tape, rows.size(), k, std::move(out), {&a});
  tape.record("gather_rows", result,
              [a, result, index = std::vector<std::size_t>(rows.begin(), rows.end()),
               k]() mutable {
                const auto g = result.grad();
                auto ga = a.grad();
                for (std::size_t i = 0; i < index.size(); ++i) {
                  for (std::size_t c = 0; c < k; ++c) ga[index[i] * k + c] += g[i * k + c];
                }
              });
  return result;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor result = make_output(tape, 1, 1, {total}, {&a});
  require_finite(result, "sum");
  tape.record("sum", result, [a, result]() mutable {
    const double g = result.grad()[0];
    for (double& v : a.grad()) v += g;
  });
  return result;
}

Tensor mean(Tape& tape, const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean: empty input");
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor dropout(Tape& tape, const Tensor& a, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = uniform(rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  Tensor result = make_output(tape, a.rows(), a.cols(), std::move(out), {&a});
  tape.record("dropout", result, [a, result, mask = std::move(mask)]() mutable {
    const auto g = result.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
  return result;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = uniform(rng);
  return Tensor::from(fan_in, fan_out, std::move(values), true);
}

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw ContractError("optimizer parameter does not require grad");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = config_.learning_rate;
  const double decay = lr * config_.weight_decay;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto w = params_[p].values();
    const auto g = params_[p].grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= decay * w[i];
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
  zero_grad();
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace hermes
