#include "xencdec/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "fp_contract.hpp"

namespace xencdec {

struct TensorAccess {
  static const std::shared_ptr<detail::Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }
};

namespace {

using NodePtr = std::shared_ptr<detail::Node>;
using detail::Buffer;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

thread_local Tape* g_active_tape = nullptr;

// exp over n values through aligned, zero-padded blocks so every element
// takes the same vectorized path whatever its address or position. Results
// far below the normal range are flushed to exact zeros so masked scores
// never leave subnormals behind.
void exp_into(const double* in, double* out, std::size_t n) {
  constexpr std::size_t kBlock = 256;
  alignas(64) double buf[kBlock];
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t m = std::min(kBlock, n - start);
    const std::size_t padded = (m + 7) / 8 * 8;
    std::copy(in + start, in + start + m, buf);
    std::fill(buf + m, buf + padded, 0.0);
    Eigen::Map<Eigen::ArrayXd, Eigen::Aligned64> block(buf, static_cast<Eigen::Index>(padded));
    block = block.exp();
    for (std::size_t i = 0; i < m; ++i) out[start + i] = in[start + i] < -700.0 ? 0.0 : buf[i];
  }
}

#if defined(__GLIBC__)
// Activations are allocated and freed every step; keep them on the heap
// instead of paying mmap/munmap page faults each time.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // the largest value glibc accepts
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

const NodePtr& node_of(const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("operation on an undefined tensor");
  return TensorAccess::node(t);
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

NodePtr make_node(Shape shape, Buffer values, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

void record(const NodePtr& output, std::function<void()> backward) {
  g_active_tape->push({output, std::move(backward)});
}

bool wants_grad(const NodePtr& n) { return n->requires_grad; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": expected rank >= 1");
  return x.shape().back();
}

}  // namespace

// ---- Shape / Tensor -------------------------------------------------------

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : node_(make_node(shape, Buffer(numel(shape), 0.0), requires_grad)) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_ = make_node(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

const Shape& Tensor::shape() const { return node_of(*this)->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::size_t Tensor::size() const { return node_of(*this)->values.size(); }

std::span<const double> Tensor::values() const { return node_of(*this)->values; }

std::span<double> Tensor::mutable_values() { return node_of(*this)->values; }

double Tensor::item() const {
  const auto& n = node_of(*this);
  if (n->values.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(n->shape));
  return n->values[0];
}

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }

bool Tensor::has_grad() const { return !node_of(*this)->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_of(*this)->grad; }

std::span<double> Tensor::mutable_grad() { return node_of(*this)->grad; }

void Tensor::zero_grad() {
  auto& n = node_of(*this);
  n->grad.assign(n->values.size(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = node_of(*this);
  return TensorAccess::wrap(make_node(n->shape, n->values, false));
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::push(Record record) { records_.push_back(std::move(record)); }

void Tape::backward(const Tensor& loss) {
  if (replayed_) throw std::logic_error("tape already replayed");
  replayed_ = true;
  const auto& root = node_of(loss);
  if (root->values.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + to_string(root->shape));
  }
  if (!root->requires_grad) return;
  root->ensure_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer out(m * n);
  MatrixMap(out.data(), m, n).noalias() =
      ConstMatrixMap(a.values().data(), m, k) * ConstMatrixMap(b.values().data(), k, n);
  const bool track = tracking({&a, &b});
  auto result = make_node({m, n}, std::move(out), track);
  if (track) {
    NodePtr na = node_of(a), nb = node_of(b);
    record(result, [na, nb, result, m, k, n] {
      ConstMatrixMap dc(result->grad.data(), m, n);
      if (wants_grad(na)) {
        MatrixMap(na->ensure_grad().data(), m, k).noalias() +=
            dc * ConstMatrixMap(nb->values.data(), k, n).transpose();
      }
      if (wants_grad(nb)) {
        MatrixMap(nb->ensure_grad().data(), k, n).noalias() +=
            ConstMatrixMap(na->values.data(), m, k).transpose() * dc;
      }
    });
  }
  return TensorAccess::wrap(result);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2 || last_dim(x, "linear") != w.dim(0)) {
    throw ShapeError("linear: incompatible shapes " + to_string(x.shape()) + " and " +
                     to_string(w.shape()));
  }
  const std::size_t in = w.dim(0), out_dim = w.dim(1), rows = x.size() / in;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw ShapeError("linear: bias shape " + to_string(bias.shape()) + " for output width " +
                     std::to_string(out_dim));
  }
  Buffer out(rows * out_dim);
  MatrixMap y(out.data(), rows, out_dim);
  y.noalias() = ConstMatrixMap(x.values().data(), rows, in) *
                ConstMatrixMap(w.values().data(), in, out_dim);
  if (bias.defined()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), out_dim);
  }
  Shape shape = x.shape();
  shape.back() = out_dim;
  const bool track = tracking({&x, &w, &bias});
  auto result = make_node(std::move(shape), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x), nw = node_of(w);
    NodePtr nb = bias.defined() ? node_of(bias) : nullptr;
    record(result, [nx, nw, nb, result, rows, in, out_dim] {
      ConstMatrixMap dy(result->grad.data(), rows, out_dim);
      if (wants_grad(nx)) {
        MatrixMap(nx->ensure_grad().data(), rows, in).noalias() +=
            dy * ConstMatrixMap(nw->values.data(), in, out_dim).transpose();
      }
      if (wants_grad(nw)) {
        MatrixMap(nw->ensure_grad().data(), in, out_dim).noalias() +=
            ConstMatrixMap(nx->values.data(), rows, in).transpose() * dy;
      }
      if (nb && wants_grad(nb)) {
        Eigen::Map<Eigen::RowVectorXd>(nb->ensure_grad().data(), out_dim) += dy.colwise().sum();
      }
    });
  }
  return TensorAccess::wrap(result);
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    throw ShapeError("batched_matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t bk = transpose_b ? sb.back() : sb[sb.size() - 2];
  const std::size_t n = transpose_b ? sb[sb.size() - 2] : sb.back();
  if (bk != k) {
    throw ShapeError("batched_matmul: inner dimensions differ in " + to_string(sa) + " and " +
                     to_string(sb));
  }
  const std::size_t batches = a.size() / (m * k);
  Buffer out(batches * m * n);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < batches; ++i) {
    ConstMatrixMap ai(av + i * m * k, m, k);
    MatrixMap ci(out.data() + i * m * n, m, n);
    if (transpose_b) {
      ci.noalias() = ai * ConstMatrixMap(bv + i * n * k, n, k).transpose();
    } else {
      ci.noalias() = ai * ConstMatrixMap(bv + i * k * n, k, n);
    }
  }
  Shape shape = sa;
  shape.back() = n;
  const bool track = tracking({&a, &b});
  auto result = make_node(std::move(shape), std::move(out), track);
  if (track) {
    NodePtr na = node_of(a), nb = node_of(b);
    record(result, [na, nb, result, batches, m, k, n, transpose_b] {
      for (std::size_t i = 0; i < batches; ++i) {
        ConstMatrixMap dc(result->grad.data() + i * m * n, m, n);
        if (wants_grad(na)) {
          MatrixMap da(na->ensure_grad().data() + i * m * k, m, k);
          if (transpose_b) {
            da.noalias() += dc * ConstMatrixMap(nb->values.data() + i * n * k, n, k);
          } else {
            da.noalias() += dc * ConstMatrixMap(nb->values.data() + i * k * n, k, n).transpose();
          }
        }
        if (wants_grad(nb)) {
          ConstMatrixMap ai(na->values.data() + i * m * k, m, k);
          if (transpose_b) {
            MatrixMap(nb->ensure_grad().data() + i * n * k, n, k).noalias() += dc.transpose() * ai;
          } else {
            MatrixMap(nb->ensure_grad().data() + i * k * n, k, n).noalias() += ai.transpose() * dc;
          }
        }
      }
    });
  }
  return TensorAccess::wrap(result);
}

// ---- elementwise ----------------------------------------------------------

namespace {

template <typename Forward, typename GradA, typename GradB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Forward fwd,
                          GradA grad_a, GradB grad_b) {
  require_same_shape(a, b, name);
  const auto av = a.values();
  const auto bv = b.values();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool track = tracking({&a, &b});
  auto result = make_node(a.shape(), std::move(out), track);
  if (track) {
    NodePtr na = node_of(a), nb = node_of(b);
    record(result, [na, nb, result, grad_a, grad_b] {
      const auto& g = result->grad;
      if (wants_grad(na)) {
        auto& ga = na->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += grad_a(g[i], na->values[i], nb->values[i]);
      }
      if (wants_grad(nb)) {
        auto& gb = nb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += grad_b(g[i], na->values[i], nb->values[i]);
      }
    });
  }
  return TensorAccess::wrap(result);
}

template <typename Forward, typename Derivative>
Tensor unary_elementwise(const Tensor& x, Forward fwd, Derivative deriv) {
  const auto xv = x.values();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const bool track = tracking({&x});
  auto result = make_node(x.shape(), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result, deriv] {
      auto& gx = nx->ensure_grad();
      const auto& g = result->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(nx->values[i]);
    });
  }
  return TensorAccess::wrap(result);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary_elementwise(
      x, [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = last_dim(x, "add_bias");
  if (bias.shape() != Shape{n}) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " for " + to_string(x.shape()));
  }
  const auto xv = x.values();
  const std::size_t rows = n == 0 ? 0 : xv.size() / n;
  Buffer out(xv.size());
  const auto b = Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), n);
  MatrixMap(out.data(), rows, n) = ConstMatrixMap(xv.data(), rows, n).rowwise() + b;
  const bool track = tracking({&x, &bias});
  auto result = make_node(x.shape(), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x), nb = node_of(bias);
    record(result, [nx, nb, result, rows, n] {
      const ConstMatrixMap g(result->grad.data(), rows, n);
      if (wants_grad(nx)) MatrixMap(nx->ensure_grad().data(), rows, n) += g;
      if (wants_grad(nb)) Eigen::Map<Eigen::RowVectorXd>(nb->ensure_grad().data(), n) += g.colwise().sum();
    });
  }
  return TensorAccess::wrap(result);
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const auto xv = x.values();
  const std::size_t n = xv.size();
  // tanh(z) = 1 - 2 / (exp(2z) + 1), clamped so exp stays finite
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = std::min(2.0 * kC * (xv[i] + kA * xv[i] * xv[i] * xv[i]), 700.0);
  exp_into(t.data(), t.data(), n);
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = 1.0 - 2.0 / (t[i] + 1.0);
    out[i] = 0.5 * xv[i] * (1.0 + t[i]);
  }
  const bool track = tracking({&x});
  auto result = make_node(x.shape(), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result, t = std::move(t)] {
      auto& gx = nx->ensure_grad();
      const auto& g = result->grad;
      const auto& v = nx->values;
      for (std::size_t i = 0; i < t.size(); ++i) {
        gx[i] += g[i] * (0.5 * (1.0 + t[i]) +
                         0.5 * v[i] * (1.0 - t[i] * t[i]) * kC * (1.0 + 3.0 * kA * v[i] * v[i]));
      }
    });
  }
  return TensorAccess::wrap(result);
}

XENCDEC_NO_FMA_ATTR Tensor mix_rows(const Tensor& a, const Tensor& b, std::span<const double> weight_a,
                std::span<const double> weight_b) {
  XENCDEC_NO_FMA_BODY
  require_same_shape(a, b, "mix_rows");
  const std::size_t width = last_dim(a, "mix_rows");
  const std::size_t rows = width == 0 ? 0 : a.size() / width;
  if (weight_a.size() != rows || weight_b.size() != rows) {
    throw ShapeError("mix_rows: " + std::to_string(rows) + " rows but weights of length " +
                     std::to_string(weight_a.size()) + "/" + std::to_string(weight_b.size()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  Buffer out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t i = r * width + c;
      out[i] = av[i] * weight_a[r] + bv[i] * weight_b[r];
    }
  }
  const bool track = tracking({&a, &b});
  auto result = make_node(a.shape(), std::move(out), track);
  if (track) {
    NodePtr na = node_of(a), nb = node_of(b);
    std::vector<double> wa(weight_a.begin(), weight_a.end());
    std::vector<double> wb(weight_b.begin(), weight_b.end());
    record(result, [na, nb, result, wa = std::move(wa), wb = std::move(wb), rows, width] {
      const auto& g = result->grad;
      if (wants_grad(na)) {
        auto& ga = na->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) ga[r * width + c] += g[r * width + c] * wa[r];
      }
      if (wants_grad(nb)) {
        auto& gb = nb->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) gb[r * width + c] += g[r * width + c] * wb[r];
      }
    });
  }
  return TensorAccess::wrap(result);
}

// ---- normalisation --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  const std::size_t n = shape[axis];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t outer = n == 0 ? 0 : x.size() / (n * inner);
  const auto xv = x.values();
  for (double v : xv) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  }
  Buffer out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      if (inner == 1) {
        const double* row = xv.data() + base;
        double* y = out.data() + base;
        const double mx = *std::max_element(row, row + n);
        for (std::size_t k = 0; k < n; ++k) y[k] = row[k] - mx;
        exp_into(y, y, n);
        const double total = std::accumulate(y, y + n, 0.0);
        for (std::size_t k = 0; k < n; ++k) y[k] /= total;
        continue;
      }
      double mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= total;
    }
  }
  const bool track = tracking({&x});
  auto result = make_node(shape, std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result, outer, inner, n] {
      auto& gx = nx->ensure_grad();
      const auto& g = result->grad;
      const auto& y = result->values;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = base + k * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return TensorAccess::wrap(result);
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t n = last_dim(x, "log_softmax");
  const std::size_t rows = n == 0 ? 0 : x.size() / n;
  const auto xv = x.values();
  Buffer out(xv.size());
  std::vector<double> e(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mx = row[0];
    for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, row[k]);
    for (std::size_t k = 0; k < n; ++k) e[k] = row[k] - mx;
    exp_into(e.data(), e.data(), n);
    const double log_z = mx + std::log(std::accumulate(e.begin(), e.end(), 0.0));
    if (std::isnan(log_z)) throw NumericError("log_softmax: NaN input");
    for (std::size_t k = 0; k < n; ++k) out[r * n + k] = row[k] - log_z;
  }
  const bool track = tracking({&x});
  auto result = make_node(x.shape(), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result, rows, n] {
      auto& gx = nx->ensure_grad();
      const auto& g = result->grad;
      const auto& y = result->values;
      std::vector<double> p(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) total += g[r * n + k];
        exp_into(y.data() + r * n, p.data(), n);
        for (std::size_t k = 0; k < n; ++k) gx[r * n + k] += g[r * n + k] - p[k] * total;
      }
    });
  }
  return TensorAccess::wrap(result);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  const std::size_t n = last_dim(x, "layer_norm");
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw ShapeError("layer_norm: parameters " + to_string(gain.shape()) + "/" +
                     to_string(bias.shape()) + " for width " + std::to_string(n));
  }
  const std::size_t rows = x.size() / n;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  Buffer out(xv.size()), normed(xv.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t k = 0; k < n; ++k) mu += row[k];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = r * n + k;
      normed[idx] = (row[k] - mu) * inv_std[r];
      out[idx] = normed[idx] * gv[k] + bv[k];
    }
  }
  const bool track = tracking({&x, &gain, &bias});
  auto result = make_node(x.shape(), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x), ng = node_of(gain), nb = node_of(bias);
    record(result, [nx, ng, nb, result, normed = std::move(normed), inv_std = std::move(inv_std), rows, n] {
      const auto& g = result->grad;
      if (wants_grad(ng)) {
        auto& gg = ng->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < n; ++k) gg[k] += g[r * n + k] * normed[r * n + k];
      }
      if (wants_grad(nb)) {
        auto& gb = nb->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < n; ++k) gb[k] += g[r * n + k];
      }
      if (wants_grad(nx)) {
        auto& gx = nx->ensure_grad();
        const auto& gain_v = ng->values;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            const double d = g[r * n + k] * gain_v[k];
            mean_d += d;
            mean_dx += d * normed[r * n + k];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = r * n + k;
            const double d = g[idx] * gain_v[k];
            gx[idx] += inv_std[r] * (d - mean_d - normed[idx] * mean_dx);
          }
        }
      }
    });
  }
  return TensorAccess::wrap(result);
}

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const auto xv = x.values();
  const bool track = tracking({&x});
  auto result = make_node(std::move(shape), Buffer(xv.begin(), xv.end()), track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += result->grad[i];
    });
  }
  return TensorAccess::wrap(result);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (order.size() != rank) throw ShapeError("permute: order rank mismatch for " + to_string(in_shape));
  std::vector<bool> seen(rank, false);
  for (auto d : order) {
    if (d >= rank || seen[d]) throw ShapeError("permute: invalid axis order for " + to_string(in_shape));
    seen[d] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * in_shape[d];
  Shape out_shape(rank);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in_shape[order[d]];
    src_stride[d] = in_stride[order[d]];
  }
  // gather[i] = source offset of output element i
  const std::size_t total = x.size();
  std::vector<std::size_t> gather(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    gather[i] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      offset -= src_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  const auto xv = x.values();
  Buffer out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[gather[i]];
  const bool track = tracking({&x});
  auto result = make_node(std::move(out_shape), std::move(out), track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result, gather = std::move(gather)] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < gather.size(); ++i) gx[gather[i]] += result->grad[i];
    });
  }
  return TensorAccess::wrap(result);
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + to_string(table.shape()));
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  const auto tv = table.values();
  Buffer out(ids.size() * width);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw ValidationError("embedding: id " + std::to_string(ids[r]) + " outside table of " +
                            std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * width, width, out.data() + r * width);
  }
  const bool track = tracking({&table});
  auto result = make_node({ids.size(), width}, std::move(out), track);
  if (track) {
    NodePtr nt = node_of(table);
    std::vector<std::int32_t> rows(ids.begin(), ids.end());
    record(result, [nt, result, rows = std::move(rows), width] {
      auto& gt = nt->ensure_grad();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t base = static_cast<std::size_t>(rows[r]) * width;
        for (std::size_t c = 0; c < width; ++c) gt[base + c] += result->grad[r * width + c];
      }
    });
  }
  return TensorAccess::wrap(result);
}

// ---- reductions and losses ------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  const bool track = tracking({&x});
  auto result = make_node(Shape{}, {total}, track);
  if (track) {
    NodePtr nx = node_of(x);
    record(result, [nx, result] {
      auto& gx = nx->ensure_grad();
      const double g = result->grad[0];
      for (auto& v : gx) v += g;
    });
  }
  return TensorAccess::wrap(result);
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

namespace {

void validate_simplex(std::span<const double> dist, const char* op) {
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= -1e-6)) throw ValidationError(std::string(op) + ": target has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ValidationError(std::string(op) + ": target sums to " + std::to_string(total));
  }
}

double kl_term(double target, double log_pred) {
  return target > 0.0 ? target * (std::log(target) - log_pred) : 0.0;
}

}  // namespace

Tensor kl_divergence(const Tensor& target_dist, const Tensor& predicted_log_probs) {
  require_same_shape(target_dist, predicted_log_probs, "kl_divergence");
  const auto t = target_dist.values();
  const auto lp = predicted_log_probs.values();
  validate_simplex(t, "kl_divergence");
  double total = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) total += kl_term(t[k], lp[k]);
  const bool track = tracking({&predicted_log_probs});
  auto result = make_node(Shape{}, {total}, track);
  if (track) {
    NodePtr nlp = node_of(predicted_log_probs);
    std::vector<double> target(t.begin(), t.end());
    record(result, [nlp, result, target = std::move(target)] {
      auto& g = nlp->ensure_grad();
      const double d = result->grad[0];
      for (std::size_t k = 0; k < target.size(); ++k) g[k] -= d * target[k];
    });
  }
  return TensorAccess::wrap(result);
}

Tensor weighted_kl_rows(std::span<const double> target, const Tensor& log_probs,
                        std::span<const double> row_weight) {
  const std::size_t vocab = last_dim(log_probs, "weighted_kl_rows");
  const std::size_t rows = log_probs.size() / vocab;
  if (target.size() != log_probs.size() || row_weight.size() != rows) {
    throw ShapeError("weighted_kl_rows: target/weights do not match log-probs " +
                     to_string(log_probs.shape()));
  }
  const auto lp = log_probs.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_weight[r] == 0.0) continue;
    const auto row = target.subspan(r * vocab, vocab);
    validate_simplex(row, "weighted_kl_rows");
    double row_total = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) row_total += kl_term(row[k], lp[r * vocab + k]);
    total += row_weight[r] * row_total;
  }
  const bool track = tracking({&log_probs});
  auto result = make_node(Shape{}, {total}, track);
  if (track) {
    NodePtr nlp = node_of(log_probs);
    std::vector<double> t(target.begin(), target.end());
    std::vector<double> w(row_weight.begin(), row_weight.end());
    record(result, [nlp, result, t = std::move(t), w = std::move(w), rows, vocab] {
      auto& g = nlp->ensure_grad();
      const double d = result->grad[0];
      for (std::size_t r = 0; r < rows; ++r) {
        if (w[r] == 0.0) continue;
        const double s = d * w[r];
        for (std::size_t k = 0; k < vocab; ++k) g[r * vocab + k] -= s * t[r * vocab + k];
      }
    });
  }
  return TensorAccess::wrap(result);
}

}  // namespace xencdec
