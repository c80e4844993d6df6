#pragma once

// Shared test oracles: central finite differences for gradients, a Jacobi
// SVD for singular values, and power iteration for dominant eigenvalues.
// All are independent implementations used only to cross-check the library.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "neurosid/param_store.hpp"
#include "neurosid/tensor.hpp"

namespace testutil {

// Checks every parameter scalar of `store` against central finite
// differences of `loss` (a pure function of the store's current values).
// Returns the worst relative error rel = |analytic - fd| / max(1, |a|, |f|).
inline double fd_worst_rel_error(neurosid::ParameterStore& store,
                                 const std::function<double()>& loss_value,
                                 const std::function<neurosid::Tensor()>& loss_graph,
                                 double h = 1e-5) {
  store.zero_grads();
  neurosid::Tensor out = loss_graph();
  neurosid::backward(out);
  auto grads = store.gradients();

  double worst = 0.0;
  store.for_each([&](const std::string& name, const neurosid::Tensor& t) {
    auto& vals = const_cast<neurosid::Tensor&>(t).mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double orig = vals[i];
      vals[i] = orig + h;
      store.bump_version();
      double fp = loss_value();
      vals[i] = orig - h;
      store.bump_version();
      double fm = loss_value();
      vals[i] = orig;
      store.bump_version();
      double fd = (fp - fm) / (2.0 * h);
      double an = grads.at(name)[i];
      double rel = std::fabs(an - fd) /
                   std::max({1.0, std::fabs(an), std::fabs(fd)});
      worst = std::max(worst, rel);
    }
  });
  return worst;
}

// One-sided Jacobi SVD: returns the singular values of a dense row-major
// rows x cols matrix (not sorted).
inline std::vector<double> singular_values(std::vector<double> a,
                                           std::size_t rows,
                                           std::size_t cols) {
  // Work on A (rows x cols) as columns; rotate column pairs until
  // orthogonal. Transpose first if rows < cols so columns are tall.
  bool transposed = rows < cols;
  if (transposed) {
    std::vector<double> at(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
    a.swap(at);
    std::swap(rows, cols);
  }
  auto col_dot = [&](std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += a[i * cols + p] * a[i * cols + q];
    return s;
  };
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < cols; ++p)
      for (std::size_t q = p + 1; q < cols; ++q) {
        double apq = col_dot(p, q);
        double app = col_dot(p, p), aqq = col_dot(q, q);
        off = std::max(off, std::fabs(apq));
        if (std::fabs(apq) < 1e-14 * std::sqrt(app * aqq) + 1e-300) continue;
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0 ? 1.0 : -1.0) /
                   (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          double vp = a[i * cols + p], vq = a[i * cols + q];
          a[i * cols + p] = c * vp - s * vq;
          a[i * cols + q] = s * vp + c * vq;
        }
      }
    if (off < 1e-14) break;
  }
  std::vector<double> sv(cols);
  for (std::size_t p = 0; p < cols; ++p) sv[p] = std::sqrt(col_dot(p, p));
  return sv;
}

// Power iteration on a square row-major matrix; returns the dominant
// eigenvalue modulus estimate.
inline double dominant_eigenvalue_modulus(const std::vector<double>& m,
                                          std::size_t n, int iters = 2000) {
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w[i] += m[i * n + j] * v[j];
    double nrm = 0.0;
    for (double x : w) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return 0.0;
    lambda = nrm;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
  }
  return lambda;
}

}  // namespace testutil
