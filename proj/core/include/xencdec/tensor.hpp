#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Every op is a free function. When a Tape is active on the calling thread
// and at least one input requires a gradient, the op appends a record with
// its local backward rule to that tape. Tape::backward replays the records
// once, in reverse order. Without an active tape (or under NoGradGuard) ops
// only compute values, which is how evaluation and the detached forward
// passes run.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xencdec {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

// Cache-line aligned storage: vectorized kernels then see the same
// alignment on every run, which keeps results bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node {
  Shape shape;
  Buffer values;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;

  Buffer& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  // Empty span when no gradient has reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Allocates (or clears) a zero gradient of the tensor's shape.
  void zero_grad();

  // Value copy with no gradient tracking.
  Tensor detach() const;

  // Identity of the underlying storage; copies of a handle compare equal.
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend struct TensorAccess;
};

// Ordered list of operation records for one forward pass.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and runs every record once in reverse order.
  // A tape can be replayed only once.
  void backward(const Tensor& loss);

  std::size_t num_records() const { return records_.size(); }

  static Tape* active();

  struct Record {
    std::shared_ptr<detail::Node> output;
    std::function<void()> backward;
  };
  void push(Record record);

 private:
  std::vector<Record> records_;
  Tape* previous_ = nullptr;
  bool replayed_ = false;
};

// Suspends recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

// ---- linear algebra -------------------------------------------------------

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., in] * w[in, out] (+ bias[out]); bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Batched product over identical leading dims: [..., m, k] x [..., k, n].
// With transpose_b the second operand is read as [..., n, k].
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x[..., n] + bias[n], broadcast over the leading dims.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// tanh approximation of GELU.
Tensor gelu(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// out[r] = a[r] * weight_a[r] + b[r] * weight_b[r], where r ranges over the
// rows of the last axis. The weights are data (no gradient).
Tensor mix_rows(const Tensor& a, const Tensor& b, std::span<const double> weight_a,
                std::span<const double> weight_b);

// ---- normalisation --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x);  // last axis
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = 1e-6);

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);

// Rows of table[vocab, dim] selected by ids -> [ids.size(), dim].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

// ---- reductions and losses ------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// sum_k target_k * (log target_k - predicted_log_probs_k), 0 log 0 = 0.
// The target is data; its gradient is never formed.
Tensor kl_divergence(const Tensor& target_dist, const Tensor& predicted_log_probs);

// sum_r row_weight[r] * KL(target[r] || exp(log_probs[r])) over [rows, vocab]
// inputs. Rows with zero weight are skipped entirely.
Tensor weighted_kl_rows(std::span<const double> target, const Tensor& log_probs,
                        std::span<const double> row_weight);

}  // namespace xencdec
