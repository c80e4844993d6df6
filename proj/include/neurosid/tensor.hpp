#pragma once

// Dense 64-bit tensors with taped reverse-mode differentiation.
// Tensors are cheap handles onto graph nodes; a forward expression records
// its operation sequence and backward() replays it in reverse topological
// order. Shapes are restricted to scalars {1}, vectors {n} and row-major
// matrices {r,c} -- all the model math in this project lives there.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "neurosid/errors.hpp"

namespace neurosid {

namespace detail {

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording in scope (evaluation-only passes).
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_enabled_flag()) {
    detail::grad_enabled_flag() = false;
  }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> val;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return val.size(); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false) {
    std::size_t expect = 1;
    for (std::size_t d : shape) expect *= d;
    if (expect != values.size())
      throw ShapeError("tensor shape/value count mismatch");
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->val = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }
  static Tensor identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Tensor({n, n}, std::move(v));
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->size(); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const {
    return node_->shape.size() > 1 ? node_->shape[1] : 1;
  }
  const std::vector<double>& values() const { return node_->val; }
  std::vector<double>& mutable_values() { return node_->val; }
  double value(std::size_t i = 0) const { return node_->val.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return node_->val.at(r * cols() + c);
  }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  std::shared_ptr<TensorNode> node() const { return node_; }

  bool is_scalar() const { return size() == 1; }
  bool is_vector() const { return node_->shape.size() == 1; }
  bool is_matrix() const { return node_->shape.size() == 2; }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline std::shared_ptr<TensorNode> make_node(
    std::vector<std::size_t> shape, std::vector<double> values,
    std::vector<std::shared_ptr<TensorNode>> parents,
    std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  bool track = grad_enabled_flag();
  if (track) {
    bool any = false;
    for (const auto& p : parents)
      if (p->requires_grad) any = true;
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction primitives
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  auto pa = a.node(), pb = b.node();
  return Tensor(detail::make_node(a.shape(), std::move(out), {pa, pb},
                                  [pa, pb](TensorNode& n) {
                                    if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pa->grad[i] += n.grad[i];
                                    }
                                    if (pb->requires_grad) {
                                      pb->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pb->grad[i] += n.grad[i];
                                    }
                                  }));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("sub: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  auto pa = a.node(), pb = b.node();
  return Tensor(detail::make_node(a.shape(), std::move(out), {pa, pb},
                                  [pa, pb](TensorNode& n) {
                                    if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pa->grad[i] += n.grad[i];
                                    }
                                    if (pb->requires_grad) {
                                      pb->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pb->grad[i] -= n.grad[i];
                                    }
                                  }));
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  auto pa = a.node(), pb = b.node();
  return Tensor(detail::make_node(a.shape(), std::move(out), {pa, pb},
                                  [pa, pb](TensorNode& n) {
                                    if (pa->requires_grad) {
                                      pa->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pa->grad[i] += n.grad[i] * pb->val[i];
                                    }
                                    if (pb->requires_grad) {
                                      pb->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pb->grad[i] += n.grad[i] * pa->val[i];
                                    }
                                  }));
}

namespace detail {

template <typename Fwd, typename Dfdx>
Tensor unary_op(const Tensor& x, Fwd fwd, Dfdx dfdx) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.values()[i]);
  auto px = x.node();
  return Tensor(make_node(
      x.shape(), std::move(out), {px}, [px, dfdx](TensorNode& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < n.size(); ++i)
          px->grad[i] += n.grad[i] * dfdx(px->val[i], n.val[i]);
      }));
}

}  // namespace detail

inline Tensor square(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

inline Tensor sqrt_t(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw DomainError("sqrt: negative operand");
  return detail::unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor exp_t(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

inline Tensor log_t(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw DomainError("log: non-positive operand");
  return detail::unary_op(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh_t(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor abs_t(const Tensor& x) {
  // Subgradient at 0 is 0.
  return detail::unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor reciprocal(const Tensor& x) {
  for (double v : x.values())
    if (v == 0.0) throw DomainError("reciprocal: zero operand");
  return detail::unary_op(
      x, [](double v) { return 1.0 / v; },
      [](double v, double) { return -1.0 / (v * v); });
}

inline Tensor max_with_scalar(const Tensor& x, double c) {
  return detail::unary_op(
      x, [c](double v) { return std::max(v, c); },
      [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

inline Tensor min_with_scalar(const Tensor& x, double c) {
  return detail::unary_op(
      x, [c](double v) { return std::min(v, c); },
      [c](double v, double) { return v < c ? 1.0 : 0.0; });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary_op(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary_op(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor sum(const Tensor& x) {
  double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  auto px = x.node();
  return Tensor(detail::make_node({1}, {s}, {px}, [px](TensorNode& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < px->val.size(); ++i) px->grad[i] += n.grad[0];
  }));
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of empty tensor");
  double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  double inv = 1.0 / static_cast<double>(x.size());
  auto px = x.node();
  return Tensor(
      detail::make_node({1}, {s * inv}, {px}, [px, inv](TensorNode& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < px->val.size(); ++i)
          px->grad[i] += n.grad[0] * inv;
      }));
}

// Broadcast multiply: scalar tensor times arbitrary tensor.
inline Tensor bmul(const Tensor& s, const Tensor& x) {
  if (!s.is_scalar()) throw ShapeError("bmul: first operand must be scalar");
  double sv = s.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x.values()[i];
  auto ps = s.node(), px = x.node();
  return Tensor(detail::make_node(
      x.shape(), std::move(out), {ps, px}, [ps, px](TensorNode& n) {
        if (ps->requires_grad) {
          ps->ensure_grad();
          double acc = 0.0;
          for (std::size_t i = 0; i < n.size(); ++i)
            acc += n.grad[i] * px->val[i];
          ps->grad[0] += acc;
        }
        if (px->requires_grad) {
          px->ensure_grad();
          for (std::size_t i = 0; i < n.size(); ++i)
            px->grad[i] += n.grad[i] * ps->val[0];
        }
      }));
}

// ---------------------------------------------------------------------------
// Structural primitives
// ---------------------------------------------------------------------------

inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: empty list");
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& p : parts) {
    if (!p.is_vector() && !p.is_scalar())
      throw ShapeError("concat: operands must be vectors");
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
  }
  auto ps = parents;
  return Tensor(detail::make_node(
      {out.size()}, std::move(out), std::move(parents), [ps](TensorNode& n) {
        std::size_t off = 0;
        for (const auto& p : ps) {
          if (p->requires_grad) {
            p->ensure_grad();
            for (std::size_t i = 0; i < p->val.size(); ++i)
              p->grad[i] += n.grad[off + i];
          }
          off += p->val.size();
        }
      }));
}

// Contiguous slice [begin, end) of a vector.
inline Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (!x.is_vector()) throw ShapeError("slice: vector expected");
  if (begin > end || end > x.size()) throw ShapeError("slice: out of range");
  std::vector<double> out(x.values().begin() + begin, x.values().begin() + end);
  auto px = x.node();
  return Tensor(detail::make_node(
      {end - begin}, std::move(out), {px}, [px, begin](TensorNode& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < n.size(); ++i)
          px->grad[begin + i] += n.grad[i];
      }));
}

// Copies min(n, out_dim) leading entries, zero-pads the rest. Fixed linear
// projection used by rMLP skip paths when layer widths differ.
inline Tensor project(const Tensor& x, std::size_t out_dim) {
  if (!x.is_vector()) throw ShapeError("project: vector expected");
  std::size_t k = std::min(x.size(), out_dim);
  std::vector<double> out(out_dim, 0.0);
  for (std::size_t i = 0; i < k; ++i) out[i] = x.values()[i];
  auto px = x.node();
  return Tensor(detail::make_node(
      {out_dim}, std::move(out), {px}, [px, k](TensorNode& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < k; ++i) px->grad[i] += n.grad[i];
      }));
}

inline Tensor transpose(const Tensor& x) {
  if (!x.is_matrix()) throw ShapeError("transpose: matrix expected");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.values()[i * c + j];
  auto px = x.node();
  return Tensor(detail::make_node(
      {c, r}, std::move(out), {px}, [px, r, c](TensorNode& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            px->grad[i * c + j] += n.grad[j * r + i];
      }));
}

inline Tensor outer(const Tensor& u, const Tensor& v) {
  if (!u.is_vector() || !v.is_vector())
    throw ShapeError("outer: vectors expected");
  std::size_t r = u.size(), c = v.size();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = u.values()[i] * v.values()[j];
  auto pu = u.node(), pv = v.node();
  return Tensor(detail::make_node(
      {r, c}, std::move(out), {pu, pv}, [pu, pv, r, c](TensorNode& n) {
        if (pu->requires_grad) {
          pu->ensure_grad();
          for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              acc += n.grad[i * c + j] * pv->val[j];
            pu->grad[i] += acc;
          }
        }
        if (pv->requires_grad) {
          pv->ensure_grad();
          for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < r; ++i)
              acc += n.grad[i * c + j] * pu->val[i];
            pv->grad[j] += acc;
          }
        }
      }));
}

// Rectangular-diagonal embedding of a vector into a rows x cols matrix.
inline Tensor diag_embed(const Tensor& d, std::size_t rows, std::size_t cols) {
  if (!d.is_vector()) throw ShapeError("diag_embed: vector expected");
  std::size_t k = std::min(rows, cols);
  if (d.size() != k) throw ShapeError("diag_embed: length must be min(r,c)");
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < k; ++i) out[i * cols + i] = d.values()[i];
  auto pd = d.node();
  return Tensor(detail::make_node(
      {rows, cols}, std::move(out), {pd}, [pd, cols, k](TensorNode& n) {
        if (!pd->requires_grad) return;
        pd->ensure_grad();
        for (std::size_t i = 0; i < k; ++i)
          pd->grad[i] += n.grad[i * cols + i];
      }));
}

// Stacks equal-length column vectors into a matrix.
inline Tensor stack_cols(const std::vector<Tensor>& cols_in) {
  if (cols_in.empty()) throw ContractError("stack_cols: empty list");
  std::size_t r = cols_in.front().size();
  std::size_t c = cols_in.size();
  std::vector<double> out(r * c);
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (std::size_t j = 0; j < c; ++j) {
    if (!cols_in[j].is_vector() || cols_in[j].size() != r)
      throw ShapeError("stack_cols: column length mismatch");
    for (std::size_t i = 0; i < r; ++i)
      out[i * c + j] = cols_in[j].values()[i];
    parents.push_back(cols_in[j].node());
  }
  auto ps = parents;
  return Tensor(detail::make_node(
      {r, c}, std::move(out), std::move(parents), [ps, r, c](TensorNode& n) {
        for (std::size_t j = 0; j < c; ++j) {
          if (!ps[j]->requires_grad) continue;
          ps[j]->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            ps[j]->grad[i] += n.grad[i * c + j];
        }
      }));
}

// Matrix product. Supports {r,c}x{c,k} -> {r,k} and {r,c}x{c} -> {r}.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (!a.is_matrix()) throw ShapeError("matmul: left operand must be a matrix");
  std::size_t r = a.rows(), c = a.cols();
  // Dispatch on the right operand's rank: a {1,1} tensor is size-1 but must
  // still multiply as a matrix so chained products keep their rank.
  if (!b.is_matrix()) {
    if (b.size() != c) throw ShapeError("matmul: inner dimension mismatch");
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j)
        acc += a.values()[i * c + j] * b.values()[j];
      out[i] = acc;
    }
    auto pa = a.node(), pb = b.node();
    return Tensor(detail::make_node(
        {r}, std::move(out), {pa, pb}, [pa, pb, r, c](TensorNode& n) {
          if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j)
                pa->grad[i * c + j] += n.grad[i] * pb->val[j];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t j = 0; j < c; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < r; ++i)
                acc += pa->val[i * c + j] * n.grad[i];
              pb->grad[j] += acc;
            }
          }
        }));
  }
  if (!b.is_matrix() || b.rows() != c)
    throw ShapeError("matmul: inner dimension mismatch");
  std::size_t k = b.cols();
  std::vector<double> out(r * k, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double av = a.values()[i * c + j];
      for (std::size_t t = 0; t < k; ++t)
        out[i * k + t] += av * b.values()[j * k + t];
    }
  auto pa = a.node(), pb = b.node();
  return Tensor(detail::make_node(
      {r, k}, std::move(out), {pa, pb}, [pa, pb, r, c, k](TensorNode& n) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              double acc = 0.0;
              for (std::size_t t = 0; t < k; ++t)
                acc += n.grad[i * k + t] * pb->val[j * k + t];
              pa->grad[i * c + j] += acc;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t j = 0; j < c; ++j)
            for (std::size_t t = 0; t < k; ++t) {
              double acc = 0.0;
              for (std::size_t i = 0; i < r; ++i)
                acc += pa->val[i * c + j] * n.grad[i * k + t];
              pb->grad[j * k + t] += acc;
            }
        }
      }));
}

// Row-wise softmax.
inline Tensor softmax_rows(const Tensor& x) {
  if (!x.is_matrix()) throw ShapeError("softmax_rows: matrix expected");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x.values()[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.values()[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(x.values()[i * c + j] - mx);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  auto px = x.node();
  return Tensor(detail::make_node(
      {r, c}, std::move(out), {px}, [px, r, c](TensorNode& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            dot += n.grad[i * c + j] * n.val[i * c + j];
          for (std::size_t j = 0; j < c; ++j)
            px->grad[i * c + j] +=
                n.val[i * c + j] * (n.grad[i * c + j] - dot);
        }
      }));
}

// Multiplies row i of a matrix by s[i].
inline Tensor scale_rows(const Tensor& m, const Tensor& s) {
  if (!m.is_matrix() || !s.is_vector())
    throw ShapeError("scale_rows: matrix and vector expected");
  std::size_t r = m.rows(), c = m.cols();
  if (s.size() != r) throw ShapeError("scale_rows: length mismatch");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = m.values()[i * c + j] * s.values()[i];
  auto pm = m.node(), ps = s.node();
  return Tensor(detail::make_node(
      {r, c}, std::move(out), {pm, ps}, [pm, ps, r, c](TensorNode& n) {
        if (pm->requires_grad) {
          pm->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              pm->grad[i * c + j] += n.grad[i * c + j] * ps->val[i];
        }
        if (ps->requires_grad) {
          ps->ensure_grad();
          for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              acc += n.grad[i * c + j] * pm->val[i * c + j];
            ps->grad[i] += acc;
          }
        }
      }));
}

// erf via the tanh-based approximation shared with GELU; keeps the core
// free of special functions and self-consistent under differentiation.
inline Tensor erf_approx(const Tensor& x) {
  constexpr double k1 = 1.1283791670955126;   // 2/sqrt(pi)
  constexpr double k3 = 0.10090666156774528;  // 0.044715 * 2^1.5 * sqrt(2/pi)
  Tensor x3 = mul(mul(x, x), x);
  return tanh_t(add(scale(x, k1), scale(x3, k3)));
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

inline void backward(const Tensor& output) {
  if (!output.is_scalar())
    throw ContractError("backward: output must be scalar");
  // Reverse topological order by DFS over recorded parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* n : order) n->grad.assign(n->val.size(), 0.0);
  output.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace neurosid
