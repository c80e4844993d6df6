#pragma once

// Activation library (ReLU, GELU, BLU, Soft Exponential with per-layer
// learnable parameters), the learnable addition/multiplication
// interpolation operator, and the four block component kinds (LM, MLP,
// rMLP, RNN) assembled from the structured linear maps.

#include <cmath>
#include <string>
#include <vector>

#include "neurosid/errors.hpp"
#include "neurosid/linmap.hpp"
#include "neurosid/param_store.hpp"
#include "neurosid/tensor.hpp"

namespace neurosid {

enum class ActivationKind { ReLU, GELU, BLU, SoftExp };
enum class BlockKind { LM, MLP, RMLP, RNN };

inline const char* to_string(ActivationKind a) {
  switch (a) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::GELU: return "gelu";
    case ActivationKind::BLU: return "blu";
    case ActivationKind::SoftExp: return "softexp";
  }
  return "?";
}

inline ActivationKind activation_from_string(const std::string& s) {
  if (s == "relu") return ActivationKind::ReLU;
  if (s == "gelu") return ActivationKind::GELU;
  if (s == "blu") return ActivationKind::BLU;
  if (s == "softexp") return ActivationKind::SoftExp;
  throw ConfigError("unknown activation: " + s);
}

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::LM: return "lm";
    case BlockKind::MLP: return "mlp";
    case BlockKind::RMLP: return "rmlp";
    case BlockKind::RNN: return "rnn";
  }
  return "?";
}

inline BlockKind block_kind_from_string(const std::string& s) {
  if (s == "lm") return BlockKind::LM;
  if (s == "mlp") return BlockKind::MLP;
  if (s == "rmlp") return BlockKind::RMLP;
  if (s == "rnn") return BlockKind::RNN;
  throw ConfigError("unknown block kind: " + s);
}

// ---------------------------------------------------------------------------
// Soft Exponential: piecewise in the learnable alpha, identity at alpha = 0.
//   alpha < 0:  -ln(1 - alpha (x + alpha)) / alpha, log argument >= 1e-6
//   alpha = 0:  x
//   alpha > 0:  (exp(alpha x) - 1) / alpha + alpha, alpha x clamped <= 20
// Implemented as a single primitive so the alpha gradient is exact in every
// branch, including the alpha -> 0 limit (1 + x^2/2).
// ---------------------------------------------------------------------------
inline Tensor soft_exponential(const Tensor& alpha, const Tensor& x) {
  if (!alpha.is_scalar()) throw ShapeError("soft_exponential: alpha scalar");
  constexpr double kLogFloor = 1e-6;
  constexpr double kExpCap = 20.0;
  constexpr double kZeroTol = 1e-12;
  double a = alpha.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = x.values()[i];
    if (std::fabs(a) < kZeroTol) {
      out[i] = v;
    } else if (a > 0.0) {
      double z = std::min(a * v, kExpCap);
      out[i] = (std::exp(z) - 1.0) / a + a;
    } else {
      double g = std::max(1.0 - a * (v + a), kLogFloor);
      out[i] = -std::log(g) / a;
    }
  }
  auto pa = alpha.node(), px = x.node();
  return Tensor(detail::make_node(
      x.shape(), std::move(out), {pa, px}, [pa, px](TensorNode& n) {
        double a = pa->val[0];
        double ga_acc = 0.0;
        for (std::size_t i = 0; i < n.size(); ++i) {
          double v = px->val[i];
          double go = n.grad[i];
          double dx, da;
          if (std::fabs(a) < kZeroTol) {
            dx = 1.0;
            da = 1.0 + 0.5 * v * v;
          } else if (a > 0.0) {
            double z = a * v;
            bool capped = z > kExpCap;
            if (capped) z = kExpCap;
            double ez = std::exp(z);
            double dzdx = capped ? 0.0 : a;
            double dzda = capped ? 0.0 : v;
            dx = ez * dzdx / a;
            da = (ez * dzda * a - (ez - 1.0)) / (a * a) + 1.0;
          } else {
            double graw = 1.0 - a * (v + a);
            bool floored = graw < kLogFloor;
            double g = floored ? kLogFloor : graw;
            double dgdx = floored ? 0.0 : -a;
            double dgda = floored ? 0.0 : -(v + 2.0 * a);
            dx = -dgdx / (g * a);
            da = std::log(g) / (a * a) - dgda / (g * a);
          }
          if (px->requires_grad) {
            px->ensure_grad();
            px->grad[i] += go * dx;
          }
          ga_acc += go * da;
        }
        if (pa->requires_grad) {
          pa->ensure_grad();
          pa->grad[0] += ga_acc;
        }
      }));
}

// Bendable Linear Unit: beta (sqrt(x^2 + 1) - 1) + x with beta in [-1, 1].
inline Tensor blu(const Tensor& beta, const Tensor& x) {
  Tensor b = min_with_scalar(max_with_scalar(beta, -1.0), 1.0);
  Tensor bend = add_scalar(sqrt_t(add_scalar(square(x), 1.0)), -1.0);
  return add(bmul(b, bend), x);
}

// tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3))).
inline Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  Tensor inner = scale(add(x, scale(mul(mul(x, x), x), 0.044715)), c);
  return scale(mul(x, add_scalar(tanh_t(inner), 1.0)), 0.5);
}

inline Tensor relu(const Tensor& x) { return max_with_scalar(x, 0.0); }

// Applies an activation; `param` is the per-layer learnable scalar for the
// parametric kinds and is ignored for ReLU/GELU.
inline Tensor activate(ActivationKind kind, const Tensor& param,
                       const Tensor& x) {
  switch (kind) {
    case ActivationKind::ReLU: return relu(x);
    case ActivationKind::GELU: return gelu(x);
    case ActivationKind::BLU: return blu(param, x);
    case ActivationKind::SoftExp: return soft_exponential(param, x);
  }
  throw ConfigError("unreachable activation kind");
}

// Learnable interpolation between elementwise addition (alpha = 0) and
// multiplication (alpha = 1): f_a(f_{-a}(x) + f_{-a}(y)) with f the soft
// exponential. Operands are floored at +1e-3 when alpha > 0 to stay inside
// the log domain.
inline Tensor interp_operator(const Tensor& a, const Tensor& b,
                              const Tensor& alpha) {
  if (a.shape() != b.shape()) throw ShapeError("interp_operator: shape mismatch");
  constexpr double kFloor = 1e-3;
  Tensor neg_alpha = scale(alpha, -1.0);
  Tensor x = a, y = b;
  if (alpha.value() > 0.0) {
    x = max_with_scalar(x, kFloor);
    y = max_with_scalar(y, kFloor);
  }
  Tensor s = add(soft_exponential(neg_alpha, x), soft_exponential(neg_alpha, y));
  return soft_exponential(alpha, s);
}

struct BlockConfig {
  BlockKind kind = BlockKind::MLP;
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::size_t hidden = 8;
  std::size_t layers = 1;
  MapKind map_kind = MapKind::Unstructured;
  ActivationKind activation = ActivationKind::ReLU;
  double lambda_min = 0.0;
  double lambda_max = 1.0;
  double lasso_weight = 0.01;
};

// One model component (f_x, f_u, f_y, f_o, f_xu). LM blocks are strictly
// linear: single map, no bias, no activation.
class Block {
 public:
  Block(BlockConfig cfg, ParameterStore& store, std::string prefix,
        std::mt19937_64& rng)
      : cfg_(cfg), prefix_(std::move(prefix)) {
    if (cfg_.layers < 1 || cfg_.hidden < 1)
      throw ConfigError("block: layers and hidden must be >= 1");
    MapConfig base;
    base.lambda_min = cfg_.lambda_min;
    base.lambda_max = cfg_.lambda_max;
    base.lasso_weight = cfg_.lasso_weight;
    auto make_map = [&](std::size_t r, std::size_t c, const std::string& tag) {
      MapConfig mc = base;
      mc.rows = r;
      mc.cols = c;
      maps_.emplace_back(cfg_.map_kind, mc, store, prefix_ + "." + tag, rng);
      return maps_.size() - 1;
    };
    auto make_bias = [&](std::size_t n, const std::string& tag) {
      biases_.push_back(
          store.create(prefix_ + "." + tag, {n}, std::vector<double>(n, 0.0)));
      return biases_.size() - 1;
    };
    auto make_act_param = [&](const std::string& tag) {
      if (cfg_.activation == ActivationKind::BLU ||
          cfg_.activation == ActivationKind::SoftExp)
        act_params_.push_back(store.create(prefix_ + "." + tag, {1}, {0.0}));
      else
        act_params_.push_back(Tensor::scalar(0.0));
    };

    switch (cfg_.kind) {
      case BlockKind::LM:
        make_map(cfg_.out_dim, cfg_.in_dim, "W");
        break;
      case BlockKind::MLP:
      case BlockKind::RMLP: {
        std::size_t prev = cfg_.in_dim;
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
          make_map(cfg_.hidden, prev, "l" + std::to_string(l));
          make_bias(cfg_.hidden, "b" + std::to_string(l));
          make_act_param("a" + std::to_string(l));
          prev = cfg_.hidden;
        }
        make_map(cfg_.out_dim, prev, "out");
        make_bias(cfg_.out_dim, "bout");
        break;
      }
      case BlockKind::RNN: {
        std::size_t prev = cfg_.in_dim;
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
          make_map(cfg_.hidden, prev, "ih" + std::to_string(l));
          make_map(cfg_.hidden, cfg_.hidden, "hh" + std::to_string(l));
          make_bias(cfg_.hidden, "b" + std::to_string(l));
          make_act_param("a" + std::to_string(l));
          prev = cfg_.hidden;
        }
        make_map(cfg_.out_dim, prev, "out");
        make_bias(cfg_.out_dim, "bout");
        break;
      }
    }
  }

  const BlockConfig& config() const { return cfg_; }
  bool is_linear() const { return cfg_.kind == BlockKind::LM; }
  const std::vector<LinearMap>& maps() const { return maps_; }

  // Feedforward evaluation; RNN blocks run as a single-step cell.
  Tensor forward(const Tensor& x) const {
    if (x.size() != cfg_.in_dim) throw ShapeError("block forward: dim mismatch");
    switch (cfg_.kind) {
      case BlockKind::LM:
        return maps_[0].apply(x);
      case BlockKind::MLP: {
        Tensor h = x;
        for (std::size_t l = 0; l < cfg_.layers; ++l)
          h = activate(cfg_.activation, act_params_[l],
                       add(maps_[l].apply(h), biases_[l]));
        return add(maps_[cfg_.layers].apply(h), biases_[cfg_.layers]);
      }
      case BlockKind::RMLP: {
        Tensor h = x;
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
          Tensor branch = activate(cfg_.activation, act_params_[l],
                                   add(maps_[l].apply(h), biases_[l]));
          Tensor skip = h.size() == cfg_.hidden ? h : project(h, cfg_.hidden);
          h = add(branch, skip);
        }
        return add(maps_[cfg_.layers].apply(h), biases_[cfg_.layers]);
      }
      case BlockKind::RNN:
        return rnn_forward({x});
    }
    throw ConfigError("unreachable block kind");
  }

  // Stacked-cell recurrence over a sequence; each layer consumes the layer
  // below's state sequence. Returns the output projection of the final
  // hidden state.
  Tensor rnn_forward(const std::vector<Tensor>& sequence) const {
    if (cfg_.kind != BlockKind::RNN)
      throw ContractError("rnn_forward on non-RNN block");
    if (sequence.empty()) throw ContractError("rnn_forward: empty sequence");
    std::vector<Tensor> inputs = sequence;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const LinearMap& w_ih = maps_[2 * l];
      const LinearMap& w_hh = maps_[2 * l + 1];
      Tensor h = Tensor::zeros({cfg_.hidden});
      std::vector<Tensor> states;
      states.reserve(inputs.size());
      for (const Tensor& xt : inputs) {
        Tensor pre = add(add(w_ih.apply(xt), w_hh.apply(h)), biases_[l]);
        h = activate(cfg_.activation, act_params_[l], pre);
        states.push_back(h);
      }
      inputs = std::move(states);
    }
    return add(maps_[2 * cfg_.layers].apply(inputs.back()),
               biases_[cfg_.layers]);
  }

  Tensor regularization_loss() const {
    Tensor acc = Tensor::scalar(0.0);
    for (const auto& m : maps_) acc = add(acc, m.regularization_loss());
    return acc;
  }

 private:
  BlockConfig cfg_;
  std::string prefix_;
  std::vector<LinearMap> maps_;
  std::vector<Tensor> biases_;
  std::vector<Tensor> act_params_;
};

}  // namespace neurosid
