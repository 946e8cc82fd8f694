#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major 2-D
// arrays of doubles.
//
// A Tensor is a cheap shared handle. Ops take a Tape, compute the forward
// value eagerly and, when any input requires a gradient, record a backward
// closure. Tape::backward replays the closures in reverse recording order.
// Leaf tensors (parameters) accumulate gradients across tapes until the
// optimizer zeroes them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hermes {

// 64-byte aligned buffers so vectorised kernels see the same alignment on
// every allocation and results are bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

using Rng = std::mt19937_64;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor ones(std::size_t rows, std::size_t cols) { return full(rows, cols, 1.0); }
  static Tensor identity(std::size_t n);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  // Nested-list literal, mostly for tests: Tensor::of({{1, 2}, {3, 4}}).
  static Tensor of(std::initializer_list<std::initializer_list<double>> rows,
                   bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data_); }
  std::size_t rows() const { return data_->rows; }
  std::size_t cols() const { return data_->cols; }
  std::size_t size() const { return data_->values.size(); }
  bool requires_grad() const { return data_->requires_grad; }

  std::span<const double> values() const { return data_->values; }
  std::span<double> values() { return data_->values; }
  // Empty when the tensor does not require a gradient. Writable through a
  // const handle: the handle is shared, the gradient buffer is not owned by it.
  std::span<double> grad() const { return data_->grad; }

  double at(std::size_t r, std::size_t c) const { return data_->values[r * data_->cols + c]; }
  double& at(std::size_t r, std::size_t c) { return data_->values[r * data_->cols + c]; }
  double grad_at(std::size_t r, std::size_t c) const { return data_->grad[r * data_->cols + c]; }
  // Value of a 1x1 tensor.
  double item() const;

  void zero_grad();
  // Deep copy of the values; the copy never requires a gradient.
  Tensor detached() const;
  // Deep copy including the requires_grad flag (fresh zero gradient).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }
  std::string shape_string() const;

 private:
  struct Storage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    AlignedBuffer values;
    AlignedBuffer grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Storage> data) : data_(std::move(data)) {}

  std::shared_ptr<Storage> data_;
};

// Records backward closures in execution order. A tape is single-threaded;
// independent tapes can run concurrently as long as they don't share
// parameters that require gradients.
class Tape {
 public:
  // A non-recording tape evaluates ops without storing closures (inference).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  // True when an op over `inputs` must produce a gradient-carrying output.
  bool needs_grad(std::initializer_list<const Tensor*> inputs) const;
  bool needs_grad(std::span<const Tensor> inputs) const;

  // Registers `output` as produced by `op`; `backward` reads output.grad()
  // and accumulates into the inputs.
  void record(const char* op, Tensor output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure once, newest
  // first. `loss` must be 1x1 and produced on this tape.
  void backward(const Tensor& loss);

 private:
  struct Op {
    const char* name;
    Tensor output;
    std::function<void()> backward;
  };
  bool recording_;
  bool backward_done_ = false;
  std::vector<Op> ops_;
};

enum class Activation { identity, relu, sigmoid, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation kind);

// Throws NumericError naming `op` when `t` holds NaN or Inf.
void require_finite(const Tensor& t, const char* op);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
// b may be the same shape as a or 1x1 (broadcast).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor add_scalar(Tape& tape, const Tensor& a, double offset);
// a (n x k) + bias (1 x k) broadcast over rows.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias);
Tensor activation(Tape& tape, const Tensor& a, Activation kind);
inline Tensor relu(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::relu); }
inline Tensor sigmoid(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::sigmoid); }
inline Tensor tanh(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::tanh); }
Tensor row_softmax(Tape& tape, const Tensor& a);
// 1 x cols maximum over rows; gradient flows to the first argmax row.
Tensor column_max_pool(Tape& tape, const Tensor& a);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> rows);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(Tape& tape, const Tensor& a, double rate, bool training, Rng& rng);

// Glorot/Xavier uniform init for a fan_in x fan_out weight.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct AdamConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer with decoupled weight decay. Holds one pair of
// moment buffers per parameter.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamConfig config);

  // Applies one update from the accumulated gradients, then zeroes them.
  void step();
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  std::span<const double> first_moment(std::size_t param) const { return m_[param]; }
  std::span<const double> second_moment(std::size_t param) const { return v_[param]; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  std::int64_t step_ = 0;
};

}  // namespace hermes
