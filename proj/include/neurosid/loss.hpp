#pragma once

// Multi-objective training loss: N-step prediction error, arrival cost,
// state smoothing, bound penalties on predictions and input-map outputs,
// and map regularization, combined under a non-negative weight vector Q.

#include <vector>

#include "neurosid/errors.hpp"
#include "neurosid/tensor.hpp"

namespace neurosid {

struct LossWeights {
  double q_y = 1.0;  // fixed, not searched
  double q_est = 0.0;
  double q_dx = 0.0;
  double q_con_y = 0.0;
  double q_con_fu = 0.0;
  double q_reg = 0.0;
};

struct Bounds {
  double y_lower = -0.2;
  double y_upper = 1.2;
  double fu_lower = -0.02;
  double fu_upper = 0.02;
};

// (1/N) sum_k ||yhat_k - y_k||^2
inline Tensor prediction_loss(const std::vector<Tensor>& yhat,
                              const std::vector<Tensor>& y) {
  if (yhat.size() != y.size())
    throw ShapeError("prediction_loss: length mismatch");
  if (yhat.empty()) throw ContractError("prediction_loss: empty series");
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t k = 0; k < yhat.size(); ++k)
    acc = add(acc, sum(square(sub(yhat[k], y[k]))));
  return scale(acc, 1.0 / static_cast<double>(yhat.size()));
}

// ||x_est_next - x_N||^2 at one segment boundary.
inline Tensor arrival_loss(const Tensor& x_est_next, const Tensor& x_last) {
  if (x_est_next.shape() != x_last.shape())
    throw ShapeError("arrival_loss: dim mismatch");
  return sum(square(sub(x_est_next, x_last)));
}

// (1/(N-1)) sum_k ||x_k - x_{k+1}||^2; zero for N = 1.
inline Tensor smoothing_loss(const std::vector<Tensor>& states) {
  if (states.size() < 2) return Tensor::scalar(0.0);
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t k = 0; k + 1 < states.size(); ++k)
    acc = add(acc, sum(square(sub(states[k], states[k + 1]))));
  return scale(acc, 1.0 / static_cast<double>(states.size() - 1));
}

// (1/N) sum_k sum_dims (max(0, lower - v) + max(0, v - upper))
inline Tensor bound_penalty(const std::vector<Tensor>& values, double lower,
                            double upper) {
  if (values.empty()) return Tensor::scalar(0.0);
  Tensor acc = Tensor::scalar(0.0);
  for (const Tensor& v : values) {
    Tensor below = max_with_scalar(scale(add_scalar(v, -lower), -1.0), 0.0);
    Tensor above = max_with_scalar(add_scalar(v, -upper), 0.0);
    acc = add(acc, add(sum(below), sum(above)));
  }
  return scale(acc, 1.0 / static_cast<double>(values.size()));
}

struct LossComponents {
  Tensor l_y, l_est, l_dx, l_con_y, l_con_fu, l_reg;
};

inline Tensor total_loss(const LossComponents& c, const LossWeights& w) {
  auto term = [](const Tensor& t, double q) {
    return t.defined() ? scale(t, q) : Tensor::scalar(0.0);
  };
  Tensor acc = term(c.l_y, w.q_y);
  acc = add(acc, term(c.l_est, w.q_est));
  acc = add(acc, term(c.l_dx, w.q_dx));
  acc = add(acc, term(c.l_con_y, w.q_con_y));
  acc = add(acc, term(c.l_con_fu, w.q_con_fu));
  acc = add(acc, term(c.l_reg, w.q_reg));
  for (double v : acc.values())
    if (!std::isfinite(v)) throw NumericError("total_loss: non-finite loss");
  return acc;
}

}  // namespace neurosid
