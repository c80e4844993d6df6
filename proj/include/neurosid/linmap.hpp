#pragma once

// The structured linear-map parametrizations: unstructured, Lasso,
// Butterfly, two singular-value-bounded SVD factorizations, and the
// Perron-Frobenius (dominant-eigenvalue-bounded) map. Each map exposes a
// forward product, a materialized matrix, and a regularization-loss term.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neurosid/errors.hpp"
#include "neurosid/param_store.hpp"
#include "neurosid/rng.hpp"
#include "neurosid/tensor.hpp"

namespace neurosid {

enum class MapKind {
  Unstructured,
  Lasso,
  Butterfly,
  SoftSVD,
  HouseholderSVD,
  PerronFrobenius,
};

inline const char* to_string(MapKind k) {
  switch (k) {
    case MapKind::Unstructured: return "linear";
    case MapKind::Lasso: return "lasso";
    case MapKind::Butterfly: return "butterfly";
    case MapKind::SoftSVD: return "softsvd";
    case MapKind::HouseholderSVD: return "householdersvd";
    case MapKind::PerronFrobenius: return "pf";
  }
  return "?";
}

inline MapKind map_kind_from_string(const std::string& s) {
  if (s == "linear") return MapKind::Unstructured;
  if (s == "lasso") return MapKind::Lasso;
  if (s == "butterfly") return MapKind::Butterfly;
  if (s == "softsvd") return MapKind::SoftSVD;
  if (s == "householdersvd") return MapKind::HouseholderSVD;
  if (s == "pf") return MapKind::PerronFrobenius;
  throw ConfigError("unknown linear map kind: " + s);
}

struct MapConfig {
  std::size_t rows = 1;
  std::size_t cols = 1;
  double lambda_min = 0.0;  // singular-value / eigenvalue lower bound
  double lambda_max = 1.0;
  double lasso_weight = 0.01;
};

// diag entries lambda_max - (lambda_max - lambda_min) * sigmoid(p);
// strictly inside (lambda_min, lambda_max).
inline Tensor bounded_sigma(const Tensor& p, double lambda_min,
                            double lambda_max) {
  return add_scalar(scale(sigmoid(p), -(lambda_max - lambda_min)), lambda_max);
}

namespace detail {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Random orthogonal matrix: modified Gram-Schmidt on a Gaussian matrix.
inline std::vector<double> random_orthogonal(std::size_t n,
                                             std::mt19937_64& rng) {
  std::vector<double> q(n * n);
  for (auto& v : q) v = gaussian(rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += q[i * n + j] * q[i * n + k];
        for (std::size_t i = 0; i < n; ++i) q[i * n + j] -= dot * q[i * n + k];
      }
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += q[i * n + j] * q[i * n + j];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) {
      // Degenerate column; fall back to a basis vector.
      for (std::size_t i = 0; i < n; ++i) q[i * n + j] = (i == j) ? 1.0 : 0.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) q[i * n + j] /= nrm;
    }
  }
  return q;
}

// One butterfly factor at a given stride: a sparse linear op mixing entries
// i and i+stride with a learnable 2x2 block per pair.
inline Tensor butterfly_factor(const Tensor& params, const Tensor& x,
                               std::size_t stride) {
  std::size_t p = x.size();
  std::vector<double> out(p, 0.0);
  const auto& pv = params.values();
  const auto& xv = x.values();
  std::size_t q = 0;
  for (std::size_t b = 0; b < p; b += 2 * stride)
    for (std::size_t t = 0; t < stride; ++t, ++q) {
      std::size_t i = b + t, j = b + t + stride;
      double a = pv[4 * q], bb = pv[4 * q + 1], c = pv[4 * q + 2],
             d = pv[4 * q + 3];
      out[i] = a * xv[i] + bb * xv[j];
      out[j] = c * xv[i] + d * xv[j];
    }
  auto pp = params.node(), px = x.node();
  return Tensor(make_node(
      {p}, std::move(out), {pp, px}, [pp, px, p, stride](TensorNode& n) {
        std::size_t q = 0;
        for (std::size_t b = 0; b < p; b += 2 * stride)
          for (std::size_t t = 0; t < stride; ++t, ++q) {
            std::size_t i = b + t, j = b + t + stride;
            double a = pp->val[4 * q], bb = pp->val[4 * q + 1],
                   c = pp->val[4 * q + 2], d = pp->val[4 * q + 3];
            double gi = n.grad[i], gj = n.grad[j];
            if (px->requires_grad) {
              px->ensure_grad();
              px->grad[i] += a * gi + c * gj;
              px->grad[j] += bb * gi + d * gj;
            }
            if (pp->requires_grad) {
              pp->ensure_grad();
              pp->grad[4 * q] += gi * px->val[i];
              pp->grad[4 * q + 1] += gi * px->val[j];
              pp->grad[4 * q + 2] += gj * px->val[i];
              pp->grad[4 * q + 3] += gj * px->val[j];
            }
          }
      }));
}

}  // namespace detail

class LinearMap {
 public:
  LinearMap(MapKind kind, MapConfig cfg, ParameterStore& store,
            std::string prefix, std::mt19937_64& rng)
      : kind_(kind), cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
    if (cfg_.rows < 1 || cfg_.cols < 1)
      throw ConfigError("linear map dims must be >= 1");
    if (cfg_.lambda_min > cfg_.lambda_max)
      throw ConfigError("lambda_min > lambda_max");
    std::size_t r = cfg_.rows, c = cfg_.cols, k = std::min(r, c);
    switch (kind_) {
      case MapKind::Unstructured:
      case MapKind::Lasso: {
        double b = 1.0 / std::sqrt(static_cast<double>(c));
        std::vector<double> w(r * c);
        for (auto& v : w) v = uniform_real(rng, -b, b);
        weight_ = store.create(prefix_ + ".W", {r, c}, std::move(w));
        break;
      }
      case MapKind::SoftSVD: {
        u_ = store.create(prefix_ + ".U", {r, r},
                          detail::random_orthogonal(r, rng));
        v_ = store.create(prefix_ + ".V", {c, c},
                          detail::random_orthogonal(c, rng));
        std::vector<double> p(k);
        for (auto& x : p) x = gaussian(rng);
        sigma_p_ = store.create(prefix_ + ".p", {k}, std::move(p));
        break;
      }
      case MapKind::HouseholderSVD: {
        std::vector<double> uv(k * r), vv(k * c), p(k);
        for (auto& x : uv) x = gaussian(rng);
        for (auto& x : vv) x = gaussian(rng);
        for (auto& x : p) x = gaussian(rng);
        hh_u_ = store.create(prefix_ + ".hu", {k, r}, std::move(uv));
        hh_v_ = store.create(prefix_ + ".hv", {k, c}, std::move(vv));
        sigma_p_ = store.create(prefix_ + ".p", {k}, std::move(p));
        break;
      }
      case MapKind::PerronFrobenius: {
        std::vector<double> m(r), s(r * c);
        for (auto& x : m) x = gaussian(rng);
        for (auto& x : s) x = gaussian(rng);
        pf_m_ = store.create(prefix_ + ".m", {r}, std::move(m));
        pf_s_ = store.create(prefix_ + ".S", {r, c}, std::move(s));
        break;
      }
      case MapKind::Butterfly: {
        std::size_t p = detail::next_pow2(std::max(r, c));
        std::size_t nfac = 0;
        for (std::size_t s = p / 2; s >= 1; s /= 2) {
          ++nfac;
          if (s == 1) break;
        }
        if (p == 1) nfac = 0;
        for (std::size_t f = 0, s = p / 2; f < nfac; ++f, s /= 2) {
          // Identity butterflies: each 2x2 block starts as I.
          std::vector<double> w(4 * (p / 2), 0.0);
          for (std::size_t q = 0; q < p / 2; ++q) {
            w[4 * q] = 1.0;
            w[4 * q + 3] = 1.0;
          }
          bf_factors_.push_back(store.create(
              prefix_ + ".bf" + std::to_string(f), {p / 2, 4}, std::move(w)));
          bf_strides_.push_back(s);
        }
        bf_dim_ = p;
        break;
      }
    }
  }

  MapKind kind() const { return kind_; }
  const MapConfig& config() const { return cfg_; }

  Tensor apply(const Tensor& x) const {
    if (x.size() != cfg_.cols) throw ShapeError("linear map apply: dim mismatch");
    if (kind_ == MapKind::Butterfly) {
      Tensor h = project(x, bf_dim_);
      for (std::size_t f = 0; f < bf_factors_.size(); ++f)
        h = detail::butterfly_factor(bf_factors_[f], h, bf_strides_[f]);
      if (bf_dim_ == cfg_.rows) return h;
      return project(h, cfg_.rows);
    }
    return matmul(cached_matrix(), x);
  }

  // Dense rows x cols matrix equal to the map's action on the identity.
  Tensor materialize() const {
    switch (kind_) {
      case MapKind::Unstructured:
      case MapKind::Lasso:
        return weight_;
      case MapKind::SoftSVD: {
        Tensor sig = bounded_sigma(sigma_p_, cfg_.lambda_min, cfg_.lambda_max);
        return matmul(matmul(u_, diag_embed(sig, cfg_.rows, cfg_.cols)), v_);
      }
      case MapKind::HouseholderSVD: {
        Tensor sig = bounded_sigma(sigma_p_, cfg_.lambda_min, cfg_.lambda_max);
        Tensor u = householder_product(hh_u_, cfg_.rows);
        Tensor v = householder_product(hh_v_, cfg_.cols);
        return matmul(matmul(u, diag_embed(sig, cfg_.rows, cfg_.cols)), v);
      }
      case MapKind::PerronFrobenius: {
        Tensor lam = bounded_sigma(pf_m_, cfg_.lambda_min, cfg_.lambda_max);
        return scale_rows(softmax_rows(pf_s_), lam);
      }
      case MapKind::Butterfly: {
        std::vector<Tensor> cols;
        for (std::size_t j = 0; j < cfg_.cols; ++j) {
          std::vector<double> e(cfg_.cols, 0.0);
          e[j] = 1.0;
          cols.push_back(apply(Tensor({cfg_.cols}, std::move(e))));
        }
        return stack_cols(cols);
      }
    }
    throw ConfigError("unreachable map kind");
  }

  Tensor regularization_loss() const {
    switch (kind_) {
      case MapKind::SoftSVD: {
        Tensor iu = Tensor::identity(cfg_.rows);
        Tensor iv = Tensor::identity(cfg_.cols);
        Tensor du = sub(matmul(transpose(u_), u_), iu);
        Tensor dv = sub(matmul(transpose(v_), v_), iv);
        return add(sum(square(du)), sum(square(dv)));
      }
      case MapKind::Lasso:
        return scale(sum(abs_t(weight_)), cfg_.lasso_weight);
      default:
        return Tensor::scalar(0.0);
    }
  }

  // Structured maps rebuild their dense form once per parameter version.
  const Tensor& cached_matrix() const {
    std::uint64_t ver = store_->version();
    bool grad_now = detail2_grad_enabled();
    if (!cache_ || cache_version_ != ver || (grad_now && !cache_grad_mode_)) {
      cache_ = materialize();
      cache_version_ = ver;
      cache_grad_mode_ = grad_now;
    }
    return *cache_;
  }

 private:
  static bool detail2_grad_enabled() { return detail::grad_enabled_flag(); }

  // Product of Householder reflections; a zero-norm reflection vector acts
  // as the identity.
  Tensor householder_product(const Tensor& vecs, std::size_t n) const {
    std::size_t k = vecs.rows();
    Tensor acc = Tensor::identity(n);
    bool have = false;
    for (std::size_t i = 0; i < k; ++i) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double v = vecs.at(i, j);
        norm2 += v * v;
      }
      if (norm2 < 1e-24) continue;
      // Row i of the reflection-vector matrix as a vector.
      Tensor row = slice(reshape_to_vector(vecs), i * n, (i + 1) * n);
      Tensor s = sum(square(row));
      Tensor h = sub(Tensor::identity(n),
                     bmul(scale(reciprocal(s), 2.0), outer(row, row)));
      acc = have ? matmul(acc, h) : h;
      have = true;
    }
    return acc;
  }

  static Tensor reshape_to_vector(const Tensor& m) {
    auto pm = m.node();
    std::vector<double> v = m.values();
    return Tensor(detail::make_node({m.size()}, std::move(v), {pm},
                                    [pm](TensorNode& n) {
                                      if (!pm->requires_grad) return;
                                      pm->ensure_grad();
                                      for (std::size_t i = 0; i < n.size(); ++i)
                                        pm->grad[i] += n.grad[i];
                                    }));
  }

  MapKind kind_;
  MapConfig cfg_;
  ParameterStore* store_;
  std::string prefix_;

  Tensor weight_;            // unstructured / lasso
  Tensor u_, v_, sigma_p_;   // soft SVD (+ sigma for householder)
  Tensor hh_u_, hh_v_;       // householder reflection vectors
  Tensor pf_m_, pf_s_;       // perron-frobenius
  std::vector<Tensor> bf_factors_;
  std::vector<std::size_t> bf_strides_;
  std::size_t bf_dim_ = 0;

  mutable std::optional<Tensor> cache_;
  mutable std::uint64_t cache_version_ = ~0ULL;
  mutable bool cache_grad_mode_ = false;
};

}  // namespace neurosid
