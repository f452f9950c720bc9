#ifndef MULVULN_TENSOR_HPP
#define MULVULN_TENSOR_HPP

// Dense row-major tensors (rank 0..2) with tape-free reverse-mode
// differentiation. Every op result keeps shared ownership of its inputs and a
// closure that pushes the output gradient back into them; backward() walks
// that graph in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mulvuln/errors.hpp"

namespace mulvuln {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node;
using Backprop = std::function<void(const Node& self, std::span<double* const> parent_grads)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  Backprop backprop;

  bool is_leaf() const { return parents.empty(); }
};

inline thread_local bool grad_enabled = true;

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor;

// Receives leaf gradients instead of the leaves' own grad buffers, so that
// independent graphs sharing parameters can be differentiated without
// touching shared state.
class GradSink {
 public:
  std::vector<double>& buffer_for(const detail::Node* leaf) {
    auto it = buffers_.find(leaf);
    if (it == buffers_.end()) {
      it = buffers_.emplace(leaf, std::vector<double>(leaf->value.size(), 0.0)).first;
    }
    return it->second;
  }
  const std::vector<double>* find(const Tensor& leaf) const;
  bool empty() const { return buffers_.empty(); }

 private:
  std::unordered_map<const detail::Node*, std::vector<double>> buffers_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape.size() > 2) throw ShapeError("tensors are limited to rank 2, got " + shape_str(shape));
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return from({n}, std::move(values), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(values), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Row count; rank-1 tensors count as a single row.
  std::size_t rows() const { return rank() == 2 ? shape()[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape().back(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    if (!has_grad()) node_->grad.assign(node_->value.size(), 0.0);
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Copy of the values as a new leaf that shares nothing with this graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

  const detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

inline const std::vector<double>* GradSink::find(const Tensor& leaf) const {
  auto it = buffers_.find(leaf.node());
  return it == buffers_.end() ? nullptr : &it->second;
}

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                          Backprop backprop) {
  Tensor out = Tensor::from(std::move(shape), std::move(values), false);
  if (!grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = const_cast<Node&>(*out.node());
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& in : inputs) node.parents.push_back(in.node_ptr());
  node.backprop = std::move(backprop);
  return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](const detail::Node& self, std::span<double* const> pg) {
                               for (double* g : pg) {
                                 if (!g) continue;
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                               }
                             });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 if (pg[0]) pg[0][i] += self.grad[i];
                                 if (pg[1]) pg[1][i] -= self.grad[i];
                               }
                             });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return detail::make_result(a.shape(), std::move(out), {a},
                             [s](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i) pg[0][i] += s * self.grad[i];
                             });
}

// a[n,m] + bias[m], broadcast over rows.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  detail::require_rank(bias, 1, "add_bias");
  const std::size_t n = a.rows(), m = a.cols();
  if (bias.size() != m) {
    throw ShapeError("add_bias: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(bias.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = a[r * m + c] + bias[c];
  return detail::make_result(a.shape(), std::move(out), {a, bias},
                             [n, m](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < m; ++c) {
                                   const double g = self.grad[r * m + c];
                                   if (pg[0]) pg[0][r * m + c] += g;
                                   if (pg[1]) pg[1][c] += g;
                                 }
                             });
}

// a[n,k] x b[k,m] -> [n,m]. A rank-1 lhs is treated as a single row and the
// result is rank 1.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(b, 2, "matmul");
  if (a.rank() == 0) throw ShapeError("matmul: scalar lhs " + shape_str(a.shape()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  Shape shape = a.rank() == 1 ? Shape{m} : Shape{n, m};
  return detail::make_result(
      std::move(shape), std::move(out), {a, b},
      [n, k, m](const detail::Node& self, std::span<double* const> pg) {
        const double* A = self.parents[0]->value.data();
        const double* B = self.parents[1]->value.data();
        const double* G = self.grad.data();
        if (double* ga = pg[0]) {
          // ga[i,:] += sum_j G[i,j] * B[:,j], via a transposed copy of B
          std::vector<double> bt(k * m);
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < m; ++j) bt[j * k + p] = B[p * m + j];
          for (std::size_t i = 0; i < n; ++i) {
            double* garow = ga + i * k;
            for (std::size_t j = 0; j < m; ++j) {
              const double g = G[i * m + j];
              const double* btrow = bt.data() + j * k;
              for (std::size_t p = 0; p < k; ++p) garow[p] += g * btrow[p];
            }
          }
        }
        if (double* gb = pg[1]) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              double* gbrow = gb + p * m;
              const double* grow = G + i * m;
              for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
            }
        }
      });
}

// a[n,k] x b[m,k]^T -> [n,m].
inline Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul_bt");
  detail::require_rank(b, 2, "matmul_bt");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_bt: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> bt(k * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = B[j * k + p];
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = bt.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  return detail::make_result(
      {n, m}, std::move(out), {a, b},
      [n, k, m](const detail::Node& self, std::span<double* const> pg) {
        const double* A = self.parents[0]->value.data();
        const double* B = self.parents[1]->value.data();
        const double* G = self.grad.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double g = G[i * m + j];
            if (g == 0.0) continue;
            if (double* ga = pg[0])
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * B[j * k + p];
            if (double* gb = pg[1])
              for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * A[i * k + p];
          }
      });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

// Row-wise softmax. `valid`, when non-empty, holds one flag per column; invalid
// columns receive exactly zero weight.
inline Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> valid = {}) {
  const std::size_t n = x.rows(), m = x.cols();
  if (!valid.empty() && valid.size() != m) {
    throw ShapeError("softmax_rows: mask length " + std::to_string(valid.size()) + " vs " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < m; ++c)
      if (valid.empty() || valid[c]) mx = std::max(mx, x[r * m + c]);
    if (mx == -INFINITY) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      if (!valid.empty() && !valid[c]) continue;
      out[r * m + c] = std::exp(x[r * m + c] - mx);
      total += out[r * m + c];
    }
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= total;
  }
  return detail::make_result(x.shape(), std::move(out), {x},
                             [n, m](const detail::Node& self, std::span<double* const> pg) {
                               const double* y = self.value.data();
                               const double* g = self.grad.data();
                               for (std::size_t r = 0; r < n; ++r) {
                                 double dotp = 0.0;
                                 for (std::size_t c = 0; c < m; ++c) dotp += g[r * m + c] * y[r * m + c];
                                 for (std::size_t c = 0; c < m; ++c)
                                   pg[0][r * m + c] += y[r * m + c] * (g[r * m + c] - dotp);
                               }
                             });
}

// Row-wise layer normalization with affine gain and bias of length cols().
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t n = x.rows(), m = x.cols();
  if (gamma.size() != m || beta.size() != m) {
    throw ShapeError("layer_norm: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(gamma.shape()) + "/" + shape_str(beta.shape()));
  }
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean += x[r * m + c];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double d = x[r * m + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (x[r * m + c] - mean) * is;
      (*xhat)[r * m + c] = h;
      out[r * m + c] = h * gamma[c] + beta[c];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, m, xhat, inv_std](const detail::Node& self, std::span<double* const> pg) {
        const double* g = self.grad.data();
        const double* gam = self.parents[1]->value.data();
        std::vector<double> dxhat(m);
        for (std::size_t r = 0; r < n; ++r) {
          const double* h = xhat->data() + r * m;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t c = 0; c < m; ++c) {
            dxhat[c] = g[r * m + c] * gam[c];
            mean_d += dxhat[c];
            mean_dh += dxhat[c] * h[c];
            if (pg[1]) pg[1][c] += g[r * m + c] * h[c];
            if (pg[2]) pg[2][c] += g[r * m + c];
          }
          mean_d /= static_cast<double>(m);
          mean_dh /= static_cast<double>(m);
          if (pg[0]) {
            const double is = (*inv_std)[r];
            for (std::size_t c = 0; c < m; ++c) pg[0][r * m + c] += is * (dxhat[c] - mean_d - h[c] * mean_dh);
          }
        }
      });
}

// GELU, tanh approximation.
inline Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](const detail::Node& self, std::span<double* const> pg) {
                               const double* xv = self.parents[0]->value.data();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 const double v = xv[i];
                                 const double t = std::tanh(kC * (v + kA * v * v * v));
                                 const double d = 0.5 * (1.0 + t) +
                                                  0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
                                 pg[0][i] += self.grad[i] * d;
                               }
                             });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](const detail::Node& self, std::span<double* const> pg) {
                               const double* xv = self.parents[0]->value.data();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 if (xv[i] > 0.0) pg[0][i] += self.grad[i];
                             });
}

// Inverted dropout with a caller-supplied Bernoulli keep mask.
inline Tensor dropout(const Tensor& x, double rate, std::vector<std::uint8_t> keep) {
  if (keep.size() != x.size()) throw ShapeError("dropout: mask size mismatch for " + shape_str(x.shape()));
  const double s = rate < 1.0 ? 1.0 / (1.0 - rate) : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep[i] ? x[i] * s : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [keep = std::move(keep), s](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 if (keep[i]) pg[0][i] += s * self.grad[i];
                             });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return detail::make_result({}, {total}, {x},
                             [](const detail::Node& self, std::span<double* const> pg) {
                               const double g = self.grad[0];
                               const std::size_t n = self.parents[0]->value.size();
                               for (std::size_t i = 0; i < n; ++i) pg[0][i] += g;
                             });
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 1, "dot");
  detail::require_same_shape(a, b, "dot");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * b[i];
  return detail::make_result({}, {total}, {a, b},
                             [](const detail::Node& self, std::span<double* const> pg) {
                               const double g = self.grad[0];
                               const auto& av = self.parents[0]->value;
                               const auto& bv = self.parents[1]->value;
                               for (std::size_t i = 0; i < av.size(); ++i) {
                                 if (pg[0]) pg[0][i] += g * bv[i];
                                 if (pg[1]) pg[1][i] += g * av[i];
                               }
                             });
}

// Mean of rows [begin, end) -> rank-1 tensor of length cols().
inline Tensor mean_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank(x, 2, "mean_rows");
  if (begin >= end || end > x.rows()) {
    throw ShapeError("mean_rows: row range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t m = x.cols();
  const double inv = 1.0 / static_cast<double>(end - begin);
  std::vector<double> out(m, 0.0);
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c] += x[r * m + c];
  for (double& v : out) v *= inv;
  return detail::make_result({m}, std::move(out), {x},
                             [begin, end, m, inv](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t r = begin; r < end; ++r)
                                 for (std::size_t c = 0; c < m; ++c) pg[0][r * m + c] += inv * self.grad[c];
                             });
}

inline Tensor mean_rows(const Tensor& x) { return mean_rows(x, 0, x.rows()); }

inline Tensor row(const Tensor& x, std::size_t r) {
  detail::require_rank(x, 2, "row");
  if (r >= x.rows()) throw ShapeError("row: index " + std::to_string(r) + " out of " + shape_str(x.shape()));
  const std::size_t m = x.cols();
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(r * m),
                          x.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * m));
  return detail::make_result({m}, std::move(out), {x},
                             [r, m](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t c = 0; c < m; ++c) pg[0][r * m + c] += self.grad[c];
                             });
}

// Stacks rank-2 blocks (rank-1 inputs count as one row) along the row axis.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t m = parts.front().cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rank() == 0 || p.cols() != m) {
      throw ShapeError("concat_rows: shape mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * m);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return detail::make_result({n, m}, std::move(out), parts,
                             [offsets](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t k = 0; k < pg.size(); ++k) {
                                 if (!pg[k]) continue;
                                 const std::size_t len = self.parents[k]->value.size();
                                 for (std::size_t i = 0; i < len; ++i) pg[k][i] += self.grad[offsets[k] + i];
                               }
                             });
}

inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank(x, 2, "slice_cols");
  const std::size_t n = x.rows(), m = x.cols();
  if (begin >= end || end > m) {
    throw ShapeError("slice_cols: column range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x[r * m + begin + c];
  return detail::make_result({n, w}, std::move(out), {x},
                             [n, m, w, begin](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < w; ++c) pg[0][r * m + begin + c] += self.grad[r * w + c];
                             });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t m = 0;
  std::vector<std::size_t> col_offsets;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.rows() != n) {
      throw ShapeError("concat_cols: shape mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    col_offsets.push_back(m);
    m += p.cols();
  }
  std::vector<double> out(n * m);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].cols();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * m + col_offsets[k] + c] = parts[k][r * w + c];
  }
  return detail::make_result({n, m}, std::move(out), parts,
                             [n, m, col_offsets](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t k = 0; k < pg.size(); ++k) {
                                 if (!pg[k]) continue;
                                 const std::size_t w = self.parents[k]->shape[1];
                                 for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t c = 0; c < w; ++c)
                                     pg[k][r * w + c] += self.grad[r * m + col_offsets[k] + c];
                               }
                             });
}

// Embedding lookup: rows of table[V,D] selected by ids -> [ids.size(), D].
inline Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  detail::require_rank(table, 2, "gather_rows");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " out of range for table " +
                       shape_str(table.shape()));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::int32_t> idcopy(ids.begin(), ids.end());
  return detail::make_result({ids.size(), d}, std::move(out), {table},
                             [idcopy = std::move(idcopy), d](const detail::Node& self, std::span<double* const> pg) {
                               for (std::size_t i = 0; i < idcopy.size(); ++i) {
                                 double* dst = pg[0] + static_cast<std::size_t>(idcopy[i]) * d;
                                 for (std::size_t c = 0; c < d; ++c) dst[c] += self.grad[i * d + c];
                               }
                             });
}

// ---------------------------------------------------------------------------
// Losses and similarity

// Cross-entropy of unnormalized logits against an integer class label.
inline Tensor cross_entropy_logits(const Tensor& logits, std::size_t label) {
  detail::require_rank(logits, 1, "cross_entropy_logits");
  const std::size_t c = logits.size();
  if (label >= c) throw ShapeError("cross_entropy_logits: label " + std::to_string(label) + " out of range");
  double mx = -INFINITY;
  for (double v : logits.data()) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : logits.data()) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  auto probs = std::make_shared<std::vector<double>>(c);
  for (std::size_t i = 0; i < c; ++i) (*probs)[i] = std::exp(logits[i] - lse);
  return detail::make_result({}, {lse - logits[label]}, {logits},
                             [probs, label](const detail::Node& self, std::span<double* const> pg) {
                               const double g = self.grad[0];
                               for (std::size_t i = 0; i < probs->size(); ++i)
                                 pg[0][i] += g * ((*probs)[i] - (i == label ? 1.0 : 0.0));
                             });
}

inline double vector_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Cosine similarity of two nonzero rank-1 tensors.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 1, "cosine_similarity");
  detail::require_same_shape(a, b, "cosine_similarity");
  const double na = vector_norm(a.data()), nb = vector_norm(b.data());
  if (na == 0.0 || nb == 0.0) throw ShapeError("cosine_similarity: zero vector");
  double ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  const double cosv = std::clamp(ab / (na * nb), -1.0, 1.0);
  return detail::make_result({}, {cosv}, {a, b},
                             [na, nb, cosv](const detail::Node& self, std::span<double* const> pg) {
                               const double g = self.grad[0];
                               const auto& av = self.parents[0]->value;
                               const auto& bv = self.parents[1]->value;
                               for (std::size_t i = 0; i < av.size(); ++i) {
                                 if (pg[0]) pg[0][i] += g * (bv[i] / (na * nb) - cosv * av[i] / (na * na));
                                 if (pg[1]) pg[1][i] += g * (av[i] / (na * nb) - cosv * bv[i] / (nb * nb));
                               }
                             });
}

// Plain-value cosine for code paths that need no gradient.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = vector_norm(a), nb = vector_norm(b);
  if (na == 0.0 || nb == 0.0) throw ShapeError("cosine_similarity: zero vector");
  double ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Reverse pass

namespace detail {

inline std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

// Propagates d(loss)/d(leaf) into every reachable leaf that requires a
// gradient. Leaf gradients accumulate across calls; with a sink they are
// accumulated into the sink instead.
inline void backward(const Tensor& loss, GradSink* sink = nullptr) {
  if (loss.size() != 1 || loss.rank() != 0) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  auto* root = const_cast<detail::Node*>(loss.node());
  if (!root->requires_grad) return;
  auto order = detail::topo_order(root);
  for (auto* n : order)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  auto leaf_buffer = [sink](detail::Node* n) -> double* {
    if (sink) return sink->buffer_for(n).data();
    if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
    return n->grad.data();
  };
  if (root->is_leaf()) {
    leaf_buffer(root)[0] += 1.0;
    return;
  }
  root->grad[0] = 1.0;
  std::vector<double*> pg;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf() || !n->backprop) continue;
    pg.assign(n->parents.size(), nullptr);
    for (std::size_t k = 0; k < n->parents.size(); ++k) {
      detail::Node* p = n->parents[k].get();
      if (!p->requires_grad) continue;
      pg[k] = p->is_leaf() ? leaf_buffer(p) : p->grad.data();
    }
    n->backprop(*n, pg);
  }
  // Interior buffers are scratch; release them.
  for (auto* n : order)
    if (!n->is_leaf()) std::vector<double>().swap(n->grad);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  bool passed = true;
};

// Compares the analytic gradient of f at x with central differences
// (f(x+eps e_i) - f(x-eps e_i)) / 2 eps. Relative error per coordinate uses
// max(|analytic|, |numeric|, 1e-8) as denominator. f must rebuild its graph on
// every call.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor& x, double eps = 1e-5,
                                  double tolerance = 1e-6) {
  const bool had = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  backward(f());
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  GradCheckReport report;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    double fp, fm;
    {
      NoGradGuard guard;
      values[i] = orig + eps;
      fp = f().item();
      values[i] = orig - eps;
      fm = f().item();
    }
    values[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = i;
    }
  }
  report.passed = report.max_relative_error < tolerance;
  x.zero_grad();
  x.set_requires_grad(had);
  return report;
}

}  // namespace mulvuln

#endif  // MULVULN_TENSOR_HPP
