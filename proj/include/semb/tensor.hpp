// include/semb/tensor.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_TENSOR_HPP
#define SEMB_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace semb {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<std::size_t>());
}

/// One node of the computation graph. Ops record their inputs here so that
/// backward() can replay the graph in reverse topological order (the tape).
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Propagates this node's grad into its parents' grad buffers.
  std::function<void(TensorNode&)> backward_fn;
};

/// Value-semantics handle to a graph node. 64-bit floats, row-major.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode>()) {}

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<TensorNode>()) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match data length " +
                                  std::to_string(data.size()));
    check_finite(data);
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, {v}, requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  /// Builds an op-result node. requires_grad is inherited from parents.
  static Tensor from_op(Shape shape, std::vector<double> data,
                        std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backward_fn) {
    check_finite(data);
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    bool rg = false;
    for (const auto& p : parents) {
      rg = rg || p.requires_grad();
      t.node_->parents.push_back(p.node_);
    }
    t.node_->requires_grad = rg;
    if (rg) {
      t.node_->grad.assign(t.node_->data.size(), 0.0);
      t.node_->backward_fn = std::move(backward_fn);
    } else {
      t.node_->parents.clear();  // no grad path, drop the subgraph
    }
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }
  const std::vector<double>& grad() const { return node_->grad; }

  double value() const {
    if (numel() != 1)
      throw std::invalid_argument("value(): tensor is not a scalar, shape " +
                                  shape_str(shape()));
    return node_->data[0];
  }

  double operator[](std::size_t i) const { return node_->data[i]; }

  void zero_grad() {
    node_->grad.assign(node_->data.size(), 0.0);
    node_->backward_done = false;
  }

  std::shared_ptr<TensorNode> node() const { return node_; }

  static void check_finite(const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x))
        throw std::runtime_error("tensor: non-finite value encountered");
  }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Runs reverse-mode backpropagation from a scalar loss. Each reachable node
/// is visited exactly once, in reverse topological order. Calling backward a
/// second time on the same loss is an error.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  TensorNode* root = loss.node().get();
  if (!root->requires_grad)
    throw std::invalid_argument(
        "backward: loss is detached (no differentiable inputs)");
  if (root->backward_done)
    throw std::runtime_error(
        "backward: already run for this loss; zero grads and rebuild the "
        "graph before calling again");
  root->backward_done = true;

  // Iterative post-order DFS over parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

template <class Fwd, class Bwd>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                 Bwd bwd) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i], b[i]);
  auto an = a.node(), bn = b.node();
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [an, bn, bwd](TensorNode& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             auto [da, db] = bwd(an->data[i], bn->data[i]);
                             if (an->requires_grad)
                               an->grad[i] += self.grad[i] * da;
                             if (bn->requires_grad)
                               bn->grad[i] += self.grad[i] * db;
                           }
                         });
}

template <class Fwd, class Bwd>
Tensor unary_ew(const Tensor& x, Fwd fwd, Bwd bwd) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  auto xn = x.node();
  return Tensor::from_op(
      x.shape(), std::move(out), {x}, [xn, bwd](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          xn->grad[i] += self.grad[i] * bwd(xn->data[i], self.data[i]);
      });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

inline Tensor tanh_op(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid_op(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp_op(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

inline Tensor log_op(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

/// max(0, x); subgradient 0 at the kink.
inline Tensor relu(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary_ew(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_const(const Tensor& x, double c) {
  return detail::unary_ew(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  auto xn = x.node();
  return Tensor::from_op(Shape{}, {s}, {x}, [xn](TensorNode& self) {
    for (double& g : xn->grad) g += self.grad[0];
  });
}

/// Arithmetic mean across the first axis of a T x d matrix.
inline Tensor mean_over_time(const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("mean_over_time: expected a 2-D tensor, got " +
                                shape_str(x.shape()));
  const std::size_t t = x.shape()[0], d = x.shape()[1];
  if (t == 0) throw std::domain_error("mean_over_time: empty sequence (T=0)");
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x[i * d + j];
  for (double& v : out) v /= static_cast<double>(t);
  auto xn = x.node();
  return Tensor::from_op(Shape{d}, std::move(out), {x},
                         [xn, t, d](TensorNode& self) {
                           for (std::size_t i = 0; i < t; ++i)
                             for (std::size_t j = 0; j < d; ++j)
                               xn->grad[i * d + j] +=
                                   self.grad[j] / static_cast<double>(t);
                         });
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw std::invalid_argument("concat: both operands must be 1-D, got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  auto an = a.node(), bn = b.node();
  const std::size_t na = a.numel();
  return Tensor::from_op(Shape{a.numel() + b.numel()}, std::move(out), {a, b},
                         [an, bn, na](TensorNode& self) {
                           if (an->requires_grad)
                             for (std::size_t i = 0; i < na; ++i)
                               an->grad[i] += self.grad[i];
                           if (bn->requires_grad)
                             for (std::size_t i = 0; i < bn->data.size(); ++i)
                               bn->grad[i] += self.grad[na + i];
                         });
}

inline Tensor slice(const Tensor& x, std::size_t begin, std::size_t len) {
  if (x.rank() != 1)
    throw std::invalid_argument("slice: expected 1-D tensor");
  if (begin + len > x.numel())
    throw std::invalid_argument("slice: out of range");
  std::vector<double> out(x.data().begin() + begin,
                          x.data().begin() + begin + len);
  auto xn = x.node();
  return Tensor::from_op(Shape{len}, std::move(out), {x},
                         [xn, begin, len](TensorNode& self) {
                           for (std::size_t i = 0; i < len; ++i)
                             xn->grad[begin + i] += self.grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
    }
  auto an = a.node(), bn = b.node();
  return Tensor::from_op(
      Shape{m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
        if (an->requires_grad)
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                s += self.grad[i * n + j] * bn->data[p * n + j];
              an->grad[i * k + p] += s;
            }
        if (bn->requires_grad)
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) {
              double s = 0.0;
              for (std::size_t i = 0; i < m; ++i)
                s += an->data[i * k + p] * self.grad[i * n + j];
              bn->grad[p * n + j] += s;
            }
      });
}

/// y = W x for W [m x d] and x [d]; the encoder's linear maps.
inline Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.shape()[1] != x.numel())
    throw std::invalid_argument("matvec: incompatible shapes " +
                                shape_str(w.shape()) + " and " +
                                shape_str(x.shape()));
  const std::size_t m = w.shape()[0], d = w.shape()[1];
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += w[i * d + j] * x[j];
  auto wn = w.node(), xn = x.node();
  return Tensor::from_op(
      Shape{m}, std::move(out), {w, x}, [wn, xn, m, d](TensorNode& self) {
        for (std::size_t i = 0; i < m; ++i) {
          const double g = self.grad[i];
          if (wn->requires_grad)
            for (std::size_t j = 0; j < d; ++j)
              wn->grad[i * d + j] += g * xn->data[j];
          if (xn->requires_grad)
            for (std::size_t j = 0; j < d; ++j)
              xn->grad[j] += g * wn->data[i * d + j];
        }
      });
}

constexpr double kNormEps = 1e-12;

inline Tensor l2_normalize(const Tensor& x) {
  if (x.rank() != 1)
    throw std::invalid_argument("l2_normalize: expected 1-D tensor");
  double nsq = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) nsq += x[i] * x[i];
  const double norm = std::sqrt(nsq);
  if (norm <= kNormEps)
    throw std::domain_error("l2_normalize: input norm below epsilon");
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / norm;
  auto xn = x.node();
  // dx = (g - y (y.g)) / ||x||  (projection Jacobian)
  return Tensor::from_op(x.shape(), std::move(out), {x},
                         [xn, norm](TensorNode& self) {
                           double dot = 0.0;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             dot += self.grad[i] * self.data[i];
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             xn->grad[i] +=
                                 (self.grad[i] - self.data[i] * dot) / norm;
                         });
}

/// Entry (i,j) = ||A_i - B_j||^2 for A [n x d], B [m x d].
inline Tensor pairwise_sq_euclidean(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1])
    throw std::invalid_argument("pairwise_sq_euclidean: dimension mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const std::size_t n = a.shape()[0], m = b.shape()[0], d = a.shape()[1];
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = a[i * d + p] - b[j * d + p];
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  auto an = a.node(), bn = b.node();
  return Tensor::from_op(
      Shape{n, m}, std::move(out), {a, b},
      [an, bn, n, m, d](TensorNode& self) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double g = 2.0 * self.grad[i * m + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < d; ++p) {
              const double diff = an->data[i * d + p] - bn->data[j * d + p];
              if (an->requires_grad) an->grad[i * d + p] += g * diff;
              if (bn->requires_grad) bn->grad[j * d + p] -= g * diff;
            }
          }
      });
}

/// ||a - b||^2 as a scalar; fused form used by the losses.
inline Tensor sq_euclidean(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sq_euclidean");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  auto an = a.node(), bn = b.node();
  return Tensor::from_op(Shape{}, {s}, {a, b}, [an, bn](TensorNode& self) {
    const double g = 2.0 * self.grad[0];
    for (std::size_t i = 0; i < an->data.size(); ++i) {
      const double diff = an->data[i] - bn->data[i];
      if (an->requires_grad) an->grad[i] += g * diff;
      if (bn->requires_grad) bn->grad[i] -= g * diff;
    }
  });
}

/// 1 - cos(a, b), in [0, 2].
inline Tensor cosine_distance(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "cosine_distance");
  if (a.rank() != 1)
    throw std::invalid_argument("cosine_distance: expected 1-D tensors");
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na <= kNormEps || nb <= kNormEps)
    throw std::domain_error("cosine_distance: zero-norm operand");
  const double cosab = dot / (na * nb);
  auto an = a.node(), bn = b.node();
  return Tensor::from_op(
      Shape{}, {1.0 - cosab}, {a, b}, [an, bn, na, nb, cosab](TensorNode& self) {
        const double g = -self.grad[0];
        for (std::size_t i = 0; i < an->data.size(); ++i) {
          const double ai = an->data[i], bi = bn->data[i];
          if (an->requires_grad)
            an->grad[i] += g * (bi / (na * nb) - cosab * ai / (na * na));
          if (bn->requires_grad)
            bn->grad[i] += g * (ai / (na * nb) - cosab * bi / (nb * nb));
        }
      });
}

// Value-only distance helpers shared by the evaluation paths.

inline double sq_euclidean_value(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("sq_euclidean: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double cosine_distance_value(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_distance: dimension mismatch");
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na <= kNormEps || nb <= kNormEps)
    throw std::domain_error("cosine_distance: zero-norm operand");
  return 1.0 - dot / (na * nb);
}

}  // namespace semb

#endif  // SEMB_TENSOR_HPP
