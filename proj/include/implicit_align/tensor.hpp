/* Copyright 2026 The implicit-align Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Dense float64 tensors with reverse-mode differentiation.
//
// Every operation whose operands require gradients records a node holding its
// inputs and an adjoint rule. Tensor::backward() orders the recorded graph
// topologically, visits each node once and accumulates into leaf gradients.
// The record is consumed by backward: intermediate nodes drop their inputs and
// a second backward through them fails.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "implicit_align/error.hpp"

namespace ialign {

using Shape = std::vector<std::size_t>;

// Per-class inclusion mask; nonzero entries mark classes kept in the support.
using ClassMask = std::vector<std::uint8_t>;

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = false;
  }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape.empty()) shape = {1};
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " +
                                   shape_string(shape));
    }
    if (values.size() != element_count(shape)) {
      throw ShapeError("tensor of shape " + shape_string(shape) + " needs " +
                       std::to_string(element_count(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = element_count(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> values() const { return node_->value; }
  // Direct write access, intended for optimizer updates of leaf parameters.
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return node_->value.at(r * cols() + c);
  }
  double item() const {
    if (numel() != 1) {
      throw ShapeError("item() needs a single-element tensor, got " +
                       shape_string(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  Tensor detach() const { return from(shape(), node_->value, false); }

  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  friend Tensor make_result(Shape, std::vector<double>, std::string_view,
                            std::initializer_list<const Tensor*>,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Builds an op output; the graph edge is recorded only when recording is on
// and some operand requires gradients.
inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::string_view op,
                          std::initializer_list<const Tensor*> inputs,
                          std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool track = false;
  if (detail::grad_mode_flag()) {
    for (const Tensor* t : inputs) track = track || t->requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->leaf = false;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

inline void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_string(shape()));
  }
  if (node_->consumed) {
    throw Error("backward() called on a consumed computation record");
  }
  if (!node_->requires_grad) {
    throw Error("backward() on a tensor that does not require gradients");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(node_, 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      std::shared_ptr<detail::Node> child = n->inputs[next++];
      if (child->requires_grad && !visited.count(child.get())) {
        if (child->consumed) {
          throw Error("backward() reached a consumed computation record");
        }
        visited.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(std::move(n));
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = it->get();
    if (n->leaf) continue;
    if (!n->grad.empty() && n->backward) n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->inputs.clear();
    n->backward = nullptr;
    n->consumed = true;
  }
}

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, std::string_view op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     shape_string(a.shape()));
  }
}

// Accumulates g into input k's gradient when that input is tracked.
inline std::vector<double>* input_grad(Node& n, std::size_t k) {
  Node& in = *n.inputs[k];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

inline std::size_t row_count(const Tensor& t) {
  return t.rank() == 1 ? 1 : t.dim(0);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), "add", {&a, &b},
                     [](detail::Node& n) {
                       for (std::size_t k = 0; k < 2; ++k) {
                         if (auto* g = detail::input_grad(n, k)) {
                           for (std::size_t i = 0; i < n.grad.size(); ++i)
                             (*g)[i] += n.grad[i];
                         }
                       }
                     });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), "sub", {&a, &b},
                     [](detail::Node& n) {
                       if (auto* g = detail::input_grad(n, 0)) {
                         for (std::size_t i = 0; i < n.grad.size(); ++i)
                           (*g)[i] += n.grad[i];
                       }
                       if (auto* g = detail::input_grad(n, 1)) {
                         for (std::size_t i = 0; i < n.grad.size(); ++i)
                           (*g)[i] -= n.grad[i];
                       }
                     });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), "mul", {&a, &b},
                     [](detail::Node& n) {
                       const auto& x = n.inputs[0]->value;
                       const auto& y = n.inputs[1]->value;
                       if (auto* g = detail::input_grad(n, 0)) {
                         for (std::size_t i = 0; i < n.grad.size(); ++i)
                           (*g)[i] += n.grad[i] * y[i];
                       }
                       if (auto* g = detail::input_grad(n, 1)) {
                         for (std::size_t i = 0; i < n.grad.size(); ++i)
                           (*g)[i] += n.grad[i] * x[i];
                       }
                     });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= c;
  return make_result(a.shape(), std::move(out), "scale", {&a},
                     [c](detail::Node& n) {
                       auto& g = *detail::input_grad(n, 0);
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         g[i] += c * n.grad[i];
                     });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// [m, k] x [k, n] -> [m, n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), "matmul", {&a, &b},
                     [m, k, n](detail::Node& node) {
                       const double* A = node.inputs[0]->value.data();
                       const double* B = node.inputs[1]->value.data();
                       const double* G = node.grad.data();
                       if (auto* ga = detail::input_grad(node, 0)) {
                         // dA = G * B^T
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             double s = 0.0;
                             const double* grow = G + i * n;
                             const double* brow = B + p * n;
                             for (std::size_t j = 0; j < n; ++j)
                               s += grow[j] * brow[j];
                             (*ga)[i * k + p] += s;
                           }
                         }
                       }
                       if (auto* gb = detail::input_grad(node, 1)) {
                         // dB = A^T * G
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* grow = G + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = A[i * k + p];
                             double* out = gb->data() + p * n;
                             for (std::size_t j = 0; j < n; ++j)
                               out[j] += aip * grow[j];
                           }
                         }
                       }
                     });
}

// Broadcast-add of a row vector: [m, n] + [n] -> [m, n].
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  detail::require_matrix(x, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw ShapeError("add_bias: shape mismatch " + shape_string(x.shape()) +
                     " vs " + shape_string(bias.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result(x.shape(), std::move(out), "add_bias", {&x, &bias},
                     [m, n](detail::Node& node) {
                       if (auto* gx = detail::input_grad(node, 0)) {
                         for (std::size_t i = 0; i < node.grad.size(); ++i)
                           (*gx)[i] += node.grad[i];
                       }
                       if (auto* gb = detail::input_grad(node, 1)) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             (*gb)[j] += node.grad[i * n + j];
                       }
                     });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), "relu", {&a},
                     [](detail::Node& n) {
                       auto& g = *detail::input_grad(n, 0);
                       const auto& x = n.inputs[0]->value;
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         if (x[i] > 0.0) g[i] += n.grad[i];
                     });
}

// Natural log; every entry must be strictly positive.
inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw Error("log: non-positive argument " + std::to_string(av[i]));
    }
    out[i] = std::log(av[i]);
  }
  return make_result(a.shape(), std::move(out), "log", {&a},
                     [](detail::Node& n) {
                       auto& g = *detail::input_grad(n, 0);
                       const auto& x = n.inputs[0]->value;
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         g[i] += n.grad[i] / x[i];
                     });
}

// log(1 - a), with 1 - a clamped below at `floor`; the clamped region has
// zero gradient.
inline Tensor log1m(const Tensor& a, double floor = 1e-15) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(std::max(1.0 - av[i], floor));
  return make_result(a.shape(), std::move(out), "log1m", {&a},
                     [floor](detail::Node& n) {
                       auto& g = *detail::input_grad(n, 0);
                       const auto& x = n.inputs[0]->value;
                       for (std::size_t i = 0; i < n.grad.size(); ++i) {
                         const double r = 1.0 - x[i];
                         if (r > floor) g[i] -= n.grad[i] / r;
                       }
                     });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, "sum", {&a}, [](detail::Node& n) {
    auto& g = *detail::input_grad(n, 0);
    for (double& v : g) v += n.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double count = static_cast<double>(a.numel());
  return make_result({1}, {s / count}, "mean", {&a}, [count](detail::Node& n) {
    auto& g = *detail::input_grad(n, 0);
    for (double& v : g) v += n.grad[0] / count;
  });
}

// Column means of a matrix: [m, n] -> [n].
inline Tensor mean_rows(const Tensor& a) {
  detail::require_matrix(a, "mean_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(n, 0.0);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (double& v : out) v /= static_cast<double>(m);
  return make_result({n}, std::move(out), "mean_rows", {&a},
                     [m, n](detail::Node& node) {
                       auto& g = *detail::input_grad(node, 0);
                       const double inv = 1.0 / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += node.grad[j] * inv;
                     });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) +
                     " as " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), "reshape", {&a},
                     [](detail::Node& n) {
                       auto& g = *detail::input_grad(n, 0);
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         g[i] += n.grad[i];
                     });
}

// Selects rows of a matrix by index (duplicates allowed).
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  detail::require_matrix(a, "gather_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  std::vector<double> out(index.size() * n);
  auto av = a.values();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(index[r]) +
                       " out of range for shape " + shape_string(a.shape()));
    }
    std::copy_n(av.begin() + index[r] * n, n, out.begin() + r * n);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({idx.size(), n}, std::move(out), "gather_rows", {&a},
                     [idx, n](detail::Node& node) {
                       auto& g = *detail::input_grad(node, 0);
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < n; ++j)
                           g[idx[r] * n + j] += node.grad[r * n + j];
                     });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_rows");
  if (begin >= end || end > a.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for shape " +
                     shape_string(a.shape()));
  }
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(a, idx);
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "concat_rows");
  detail::require_matrix(b, "concat_rows");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("concat_rows: shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  const std::size_t split = a.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return make_result({a.dim(0) + b.dim(0), a.dim(1)}, std::move(out),
                     "concat_rows", {&a, &b}, [split](detail::Node& n) {
                       if (auto* ga = detail::input_grad(n, 0)) {
                         for (std::size_t i = 0; i < split; ++i)
                           (*ga)[i] += n.grad[i];
                       }
                       if (auto* gb = detail::input_grad(n, 1)) {
                         for (std::size_t i = split; i < n.grad.size(); ++i)
                           (*gb)[i - split] += n.grad[i];
                       }
                     });
}

// out[i] = a[i, cols[i]]
inline Tensor pick(const Tensor& a, std::span<const int> cols) {
  const std::size_t m = detail::row_count(a), n = a.cols();
  if (cols.size() != m) {
    throw ShapeError("pick: " + std::to_string(cols.size()) +
                     " column ids for shape " + shape_string(a.shape()));
  }
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= n) {
      throw ShapeError("pick: column " + std::to_string(cols[i]) +
                       " out of range for shape " + shape_string(a.shape()));
    }
    out[i] = a.values()[i * n + cols[i]];
  }
  std::vector<int> c(cols.begin(), cols.end());
  return make_result({m}, std::move(out), "pick", {&a},
                     [c, n](detail::Node& node) {
                       auto& g = *detail::input_grad(node, 0);
                       for (std::size_t i = 0; i < c.size(); ++i)
                         g[i * n + c[i]] += node.grad[i];
                     });
}

namespace detail {

inline void check_mask(std::span<const std::uint8_t> mask, std::size_t n,
                       std::string_view op) {
  if (mask.empty()) return;
  if (mask.size() != n) {
    throw ShapeError(std::string(op) + ": mask of length " +
                     std::to_string(mask.size()) + " for " + std::to_string(n) +
                     " classes");
  }
  if (std::none_of(mask.begin(), mask.end(), [](auto v) { return v != 0; })) {
    throw Error(std::string(op) + ": mask selects no classes");
  }
}

// Row-wise softmax over the masked support (all columns when mask is empty).
// Excluded columns get probability exactly zero.
inline std::vector<double> softmax_rows(std::span<const double> x, std::size_t m,
                                        std::size_t n,
                                        std::span<const std::uint8_t> mask) {
  std::vector<double> p(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    double* out = p.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    if (mask.empty()) {
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        out[j] = std::exp(row[j] - mx);
        s += out[j];
      }
      for (std::size_t j = 0; j < n; ++j) out[j] /= s;
    } else {
      for (std::size_t j = 0; j < n; ++j)
        if (mask[j]) mx = std::max(mx, row[j]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (mask[j]) {
          out[j] = std::exp(row[j] - mx);
          s += out[j];
        }
      }
      for (std::size_t j = 0; j < n; ++j)
        if (mask[j]) out[j] /= s;
    }
  }
  return p;
}

}  // namespace detail

// Row-wise softmax of a matrix (a vector is treated as one row). A non-empty
// mask restricts the support to its nonzero columns.
inline Tensor softmax(const Tensor& a, std::span<const std::uint8_t> mask = {}) {
  const std::size_t m = detail::row_count(a), n = a.cols();
  detail::check_mask(mask, n, "softmax");
  auto p = detail::softmax_rows(a.values(), m, n, mask);
  std::vector<double> saved = p;
  return make_result(a.shape(), std::move(p), "softmax", {&a},
                     [saved = std::move(saved), m, n](detail::Node& node) {
                       auto& g = *detail::input_grad(node, 0);
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* p = saved.data() + i * n;
                         const double* up = node.grad.data() + i * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += up[j] * p[j];
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += p[j] * (up[j] - dot);
                       }
                     });
}

// out[i] = log softmax(a[i, :])[cols[i]], restricted to the mask's support.
// The picked column must lie inside the support.
inline Tensor pick_log_softmax(const Tensor& a, std::span<const int> cols,
                               std::span<const std::uint8_t> mask = {}) {
  const std::size_t m = detail::row_count(a), n = a.cols();
  detail::check_mask(mask, n, "pick_log_softmax");
  if (cols.size() != m) {
    throw ShapeError("pick_log_softmax: " + std::to_string(cols.size()) +
                     " column ids for shape " + shape_string(a.shape()));
  }
  std::vector<double> out(m);
  std::vector<double> probs(m * n, 0.0);
  auto x = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const int c = cols[i];
    if (c < 0 || static_cast<std::size_t>(c) >= n) {
      throw ShapeError("pick_log_softmax: column " + std::to_string(c) +
                       " out of range for shape " + shape_string(a.shape()));
    }
    if (!mask.empty() && !mask[c]) {
      throw Error("pick_log_softmax: column " + std::to_string(c) +
                  " lies outside the mask support");
    }
    const double* row = x.data() + i * n;
    double* p = probs.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    double s = 0.0;
    if (mask.empty()) {
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
      for (std::size_t j = 0; j < n; ++j) {
        p[j] = std::exp(row[j] - mx);
        s += p[j];
      }
      for (std::size_t j = 0; j < n; ++j) p[j] /= s;
    } else {
      for (std::size_t j = 0; j < n; ++j)
        if (mask[j]) mx = std::max(mx, row[j]);
      for (std::size_t j = 0; j < n; ++j) {
        if (mask[j]) {
          p[j] = std::exp(row[j] - mx);
          s += p[j];
        }
      }
      for (std::size_t j = 0; j < n; ++j)
        if (mask[j]) p[j] /= s;
    }
    out[i] = row[c] - mx - std::log(s);
  }
  std::vector<int> c(cols.begin(), cols.end());
  return make_result({m}, std::move(out), "pick_log_softmax", {&a},
                     [probs = std::move(probs), c, n](detail::Node& node) {
                       auto& g = *detail::input_grad(node, 0);
                       for (std::size_t i = 0; i < c.size(); ++i) {
                         const double up = node.grad[i];
                         const double* p = probs.data() + i * n;
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] -= up * p[j];
                         g[i * n + c[i]] += up;
                       }
                     });
}

// Mean softmax cross-entropy of logits [m, C] against integer labels.
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return scale(mean(pick_log_softmax(logits, labels)), -1.0);
}

// Mean binary cross-entropy on raw logits, computed in the stable form
// max(x, 0) - x t + log(1 + exp(-|x|)).
inline Tensor bce_with_logits(const Tensor& logits,
                              std::span<const double> targets) {
  const std::size_t m = logits.numel();
  if (targets.size() != m) {
    throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) +
                     " targets for shape " + shape_string(logits.shape()));
  }
  double total = 0.0;
  auto x = logits.values();
  for (std::size_t i = 0; i < m; ++i) {
    total += std::max(x[i], 0.0) - x[i] * targets[i] +
             std::log1p(std::exp(-std::abs(x[i])));
  }
  std::vector<double> t(targets.begin(), targets.end());
  return make_result({1}, {total / static_cast<double>(m)}, "bce_with_logits",
                     {&logits}, [t = std::move(t)](detail::Node& node) {
                       auto& g = *detail::input_grad(node, 0);
                       const auto& x = node.inputs[0]->value;
                       const double scale =
                           node.grad[0] / static_cast<double>(t.size());
                       for (std::size_t i = 0; i < t.size(); ++i) {
                         const double sig = 1.0 / (1.0 + std::exp(-x[i]));
                         g[i] += scale * (sig - t[i]);
                       }
                     });
}

// Identity in the forward pass; scales the upstream gradient by -lambda in
// the backward pass.
inline Tensor gradient_reversal(const Tensor& x, double lambda) {
  if (!(lambda >= 0.0)) {
    throw Error("gradient_reversal: lambda must be non-negative, got " +
                std::to_string(lambda));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(x.shape(), std::move(out), "gradient_reversal", {&x},
                     [lambda](detail::Node& n) {
                       auto& g = *detail::input_grad(n, 0);
                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                         g[i] += -lambda * n.grad[i];
                     });
}

}  // namespace ialign
