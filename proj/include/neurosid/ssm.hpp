#pragma once

// Neural time-invariant state space models: a state estimator consuming a
// window of past outputs, state transition dynamics (either a single
// black-box map over [x;u] or separate f_x / f_u blocks joined by an
// elementwise operator), and an observer producing predictions. Provides
// the N-step open-loop rollout used for training and evaluation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurosid/block.hpp"
#include "neurosid/errors.hpp"
#include "neurosid/param_store.hpp"
#include "neurosid/rng.hpp"
#include "neurosid/tensor.hpp"

namespace neurosid {

enum class ModelClass { BlackBox, Block };
enum class StepOp { Add, Mul, Interp };

inline const char* to_string(ModelClass c) {
  return c == ModelClass::BlackBox ? "black-box" : "block";
}
inline ModelClass model_class_from_string(const std::string& s) {
  if (s == "black-box") return ModelClass::BlackBox;
  if (s == "block") return ModelClass::Block;
  throw ConfigError("unknown model class: " + s);
}

inline const char* to_string(StepOp op) {
  switch (op) {
    case StepOp::Add: return "+";
    case StepOp::Mul: return "x";
    case StepOp::Interp: return "+/x";
  }
  return "?";
}
inline StepOp step_op_from_string(const std::string& s) {
  if (s == "+") return StepOp::Add;
  if (s == "x") return StepOp::Mul;
  if (s == "+/x") return StepOp::Interp;
  throw ConfigError("unknown step operator: " + s);
}

struct SSMSpec {
  ModelClass model_class = ModelClass::Block;
  std::size_t state_dim = 20;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t horizon = 8;      // N
  std::size_t past_window = 8;  // N_p (= N when decoded from a genome)
  BlockConfig f_o;
  BlockConfig f_y;
  BlockConfig f_x;   // block class
  BlockConfig f_u;   // block class
  StepOp op = StepOp::Add;
  BlockConfig f_xu;  // black-box class
};

inline void to_json(nlohmann::ordered_json& j, const BlockConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"in_dim", c.in_dim},
       {"out_dim", c.out_dim},
       {"hidden", c.hidden},
       {"layers", c.layers},
       {"map", to_string(c.map_kind)},
       {"activation", to_string(c.activation)},
       {"lambda_min", c.lambda_min},
       {"lambda_max", c.lambda_max}};
}

inline void from_json(const nlohmann::json& j, BlockConfig& c) {
  c.kind = block_kind_from_string(j.at("kind").get<std::string>());
  c.in_dim = j.at("in_dim").get<std::size_t>();
  c.out_dim = j.at("out_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.map_kind = map_kind_from_string(j.at("map").get<std::string>());
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.lambda_min = j.at("lambda_min").get<double>();
  c.lambda_max = j.at("lambda_max").get<double>();
}

inline void to_json(nlohmann::ordered_json& j, const SSMSpec& s) {
  j = nlohmann::ordered_json{{"model_class", to_string(s.model_class)},
                             {"state_dim", s.state_dim},
                             {"input_dim", s.input_dim},
                             {"output_dim", s.output_dim},
                             {"horizon", s.horizon},
                             {"past_window", s.past_window}};
  nlohmann::ordered_json fo, fy;
  to_json(fo, s.f_o);
  to_json(fy, s.f_y);
  j["f_o"] = fo;
  j["f_y"] = fy;
  if (s.model_class == ModelClass::Block) {
    nlohmann::ordered_json fx, fu;
    to_json(fx, s.f_x);
    to_json(fu, s.f_u);
    j["f_x"] = fx;
    j["f_u"] = fu;
    j["operator"] = to_string(s.op);
  } else {
    nlohmann::ordered_json fxu;
    to_json(fxu, s.f_xu);
    j["f_xu"] = fxu;
  }
}

inline void from_json(const nlohmann::json& j, SSMSpec& s) {
  s.model_class = model_class_from_string(j.at("model_class").get<std::string>());
  s.state_dim = j.at("state_dim").get<std::size_t>();
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.horizon = j.at("horizon").get<std::size_t>();
  s.past_window = j.at("past_window").get<std::size_t>();
  from_json(j.at("f_o"), s.f_o);
  from_json(j.at("f_y"), s.f_y);
  if (s.model_class == ModelClass::Block) {
    from_json(j.at("f_x"), s.f_x);
    from_json(j.at("f_u"), s.f_u);
    s.op = step_op_from_string(j.at("operator").get<std::string>());
  } else {
    from_json(j.at("f_xu"), s.f_xu);
  }
}

struct RolloutResult {
  Tensor x_est;
  std::vector<Tensor> states;       // x_1 .. x_N
  std::vector<Tensor> predictions;  // y_1 .. y_N
  std::vector<Tensor> fu_outputs;   // f_u(u_k), block class only
};

class SSMInstance {
 public:
  SSMInstance(SSMSpec spec, std::uint64_t seed) : spec_(normalize(spec)) {
    auto rng = make_rng(seed);
    f_o_.emplace(spec_.f_o, store_, "f_o", rng);
    f_y_.emplace(spec_.f_y, store_, "f_y", rng);
    if (spec_.model_class == ModelClass::Block) {
      f_x_.emplace(spec_.f_x, store_, "f_x", rng);
      f_u_.emplace(spec_.f_u, store_, "f_u", rng);
      if (spec_.op == StepOp::Interp)
        interp_alpha_ = store_.create("op.alpha", {1}, {0.0});
    } else {
      f_xu_.emplace(spec_.f_xu, store_, "f_xu", rng);
    }
  }

  const SSMSpec& spec() const { return spec_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const Block& observer() const { return *f_y_; }
  const Block& estimator() const { return *f_o_; }
  const Block* dynamics_x() const { return f_x_ ? &*f_x_ : nullptr; }
  const Block* input_map() const { return f_u_ ? &*f_u_ : nullptr; }
  const Block* dynamics_xu() const { return f_xu_ ? &*f_xu_ : nullptr; }

  // past_outputs: exactly N_p vectors of dim n_y, oldest first.
  Tensor estimate_state(const std::vector<Tensor>& past_outputs) const {
    if (past_outputs.size() != spec_.past_window)
      throw ShapeError("estimate_state: wrong window length");
    if (spec_.f_o.kind == BlockKind::RNN)
      return f_o_->rnn_forward(past_outputs);
    return f_o_->forward(concat(past_outputs));
  }

  Tensor step(const Tensor& x, const Tensor& u, Tensor* fu_out = nullptr) const {
    if (spec_.model_class == ModelClass::BlackBox)
      return f_xu_->forward(concat({x, u}));
    Tensor fx = f_x_->forward(x);
    Tensor fu = f_u_->forward(u);
    if (fu_out) *fu_out = fu;
    switch (spec_.op) {
      case StepOp::Add: return add(fx, fu);
      case StepOp::Mul: return mul(fx, fu);
      case StepOp::Interp: return interp_operator(fx, fu, interp_alpha_);
    }
    throw ConfigError("unreachable step operator");
  }

  // x_est plays the role of x_0: x_1 = step(x_est, u_1), y_k = f_y(x_k).
  RolloutResult rollout(const std::vector<Tensor>& past_outputs,
                        const std::vector<Tensor>& inputs) const {
    RolloutResult out;
    out.x_est = estimate_state(past_outputs);
    Tensor x = out.x_est;
    bool block = spec_.model_class == ModelClass::Block;
    for (const Tensor& u : inputs) {
      Tensor fu;
      x = step(x, u, block ? &fu : nullptr);
      out.states.push_back(x);
      out.predictions.push_back(f_y_->forward(x));
      if (block) out.fu_outputs.push_back(fu);
    }
    return out;
  }

  // Single uncorrected rollout across an entire split: anchors on the first
  // N_p ground-truth outputs and predicts the remaining length.
  double open_loop_eval(const std::vector<std::vector<double>>& inputs,
                        const std::vector<std::vector<double>>& outputs) const {
    if (outputs.size() <= spec_.past_window)
      throw ContractError("open_loop_eval: trajectory shorter than window");
    NoGradGuard ng;
    std::vector<Tensor> window;
    for (std::size_t k = 0; k < spec_.past_window; ++k)
      window.push_back(Tensor({spec_.output_dim}, outputs[k]));
    Tensor x = estimate_state(window);
    double se = 0.0;
    std::size_t count = 0;
    for (std::size_t k = spec_.past_window; k < outputs.size(); ++k) {
      x = step(x, Tensor({spec_.input_dim}, inputs[k]));
      Tensor yhat = f_y_->forward(x);
      for (std::size_t d = 0; d < spec_.output_dim; ++d) {
        double e = yhat.value(d) - outputs[k][d];
        se += e * e;
      }
      ++count;
    }
    // Mean over steps of the squared error norm, matching the N-step
    // prediction loss evaluated over the whole split.
    return se / static_cast<double>(count);
  }

  Tensor regularization_loss() const {
    Tensor acc = add(f_o_->regularization_loss(), f_y_->regularization_loss());
    if (f_x_) acc = add(acc, f_x_->regularization_loss());
    if (f_u_) acc = add(acc, f_u_->regularization_loss());
    if (f_xu_) acc = add(acc, f_xu_->regularization_loss());
    return acc;
  }

 private:
  // Fills in the dimension wiring the spec implies before construction.
  static SSMSpec normalize(SSMSpec s) {
    if (s.horizon < 1 || s.state_dim < 1 || s.input_dim < 1 ||
        s.output_dim < 1)
      throw ConfigError("ssm spec: dims and horizon must be >= 1");
    s.f_o.in_dim = s.f_o.kind == BlockKind::RNN
                       ? s.output_dim
                       : s.past_window * s.output_dim;
    s.f_o.out_dim = s.state_dim;
    s.f_y.in_dim = s.state_dim;
    s.f_y.out_dim = s.output_dim;
    s.f_x.in_dim = s.state_dim;
    s.f_x.out_dim = s.state_dim;
    s.f_u.in_dim = s.input_dim;
    s.f_u.out_dim = s.state_dim;
    s.f_xu.in_dim = s.state_dim + s.input_dim;
    s.f_xu.out_dim = s.state_dim;
    return s;
  }

  SSMSpec spec_;
  ParameterStore store_;
  std::optional<Block> f_o_, f_y_, f_x_, f_u_, f_xu_;
  Tensor interp_alpha_;
};

}  // namespace neurosid
