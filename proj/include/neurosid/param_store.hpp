#pragma once

// Named parameter registry with AdamW state and JSON checkpointing.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurosid/errors.hpp"
#include "neurosid/tensor.hpp"

namespace neurosid {

struct AdamWConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class ParameterStore {
 public:
  Tensor create(const std::string& name, std::vector<std::size_t> shape,
                std::vector<double> values) {
    if (params_.count(name))
      throw ConfigError("duplicate parameter name: " + name);
    Tensor t(std::move(shape), std::move(values), /*requires_grad=*/true);
    params_.emplace(name, t);
    moments_.emplace(name, Moments{std::vector<double>(t.size(), 0.0),
                                   std::vector<double>(t.size(), 0.0)});
    return t;
  }

  Tensor get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name); }
  std::size_t count() const { return params_.size(); }
  long step_count() const { return step_; }

  // Bumped whenever parameter values change; lets downstream caches of
  // derived tensors (materialized maps) know when to rebuild.
  std::uint64_t version() const { return version_; }

  // Marks parameter values as externally modified (cache invalidation for
  // callers that mutate values directly, e.g. finite-difference probes).
  void bump_version() { ++version_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_) n += v.size();
    return n;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [name, t] : params_) fn(name, t);
  }

  void zero_grads() {
    for (auto& [name, t] : params_) t.node()->grad.assign(t.size(), 0.0);
  }

  // Gradient map after backward(); parameters off the graph report zeros.
  std::map<std::string, std::vector<double>> gradients() const {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, t] : params_) {
      if (t.node()->grad.size() == t.size())
        out[name] = t.node()->grad;
      else
        out[name] = std::vector<double>(t.size(), 0.0);
    }
    return out;
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [name, t] : params_)
      for (double g : t.node()->grad) s += g * g;
    return std::sqrt(s);
  }

  // Scales all gradients so their global norm is at most max_norm.
  // Returns true if clipping was applied.
  bool clip_grads(double max_norm) {
    double norm = grad_norm();
    if (!(norm > max_norm)) return false;
    double f = max_norm / norm;
    for (auto& [name, t] : params_)
      for (double& g : t.node()->grad) g *= f;
    return true;
  }

  // One decoupled-weight-decay Adam step over all parameters.
  // Throws NumericError on NaN/Inf gradients without touching any value.
  void adamw_step(const AdamWConfig& c) {
    for (const auto& [name, t] : params_)
      for (double g : t.node()->grad)
        if (!std::isfinite(g))
          throw NumericError("adamw_step: non-finite gradient in " + name);
    ++step_;
    ++version_;
    double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step_));
    for (auto& [name, t] : params_) {
      auto& mo = moments_.at(name);
      auto& val = t.mutable_values();
      const auto& grad = t.node()->grad;
      for (std::size_t i = 0; i < val.size(); ++i) {
        double g = grad.size() == val.size() ? grad[i] : 0.0;
        mo.m[i] = c.beta1 * mo.m[i] + (1.0 - c.beta1) * g;
        mo.v[i] = c.beta2 * mo.v[i] + (1.0 - c.beta2) * g * g;
        double mhat = mo.m[i] / bc1;
        double vhat = mo.v[i] / bc2;
        // Decay applied to the parameter directly, not via the gradient.
        val[i] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) +
                          c.weight_decay * val[i]);
      }
    }
  }

  // Value snapshot (optimizer state excluded); used for best-epoch restore.
  std::map<std::string, std::vector<double>> snapshot() const {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, t] : params_) out[name] = t.values();
    return out;
  }

  void restore(const std::map<std::string, std::vector<double>>& snap) {
    ++version_;
    for (auto& [name, t] : params_) {
      auto it = snap.find(name);
      if (it == snap.end() || it->second.size() != t.size())
        throw ConfigError("restore: snapshot mismatch for " + name);
      t.mutable_values() = it->second;
    }
  }

  // Flat {name: {shape, values}} object; keys in sorted order.
  nlohmann::ordered_json checkpoint() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, t] : params_) {
      j[name] = {{"shape", t.shape()}, {"values", t.values()}};
    }
    return j;
  }

  void load_checkpoint(const nlohmann::json& j) {
    ++version_;
    for (auto& [name, t] : params_) {
      if (!j.contains(name))
        throw ConfigError("checkpoint missing parameter: " + name);
      auto vals = j.at(name).at("values").get<std::vector<double>>();
      auto shape = j.at(name).at("shape").get<std::vector<std::size_t>>();
      if (shape != t.shape() || vals.size() != t.size())
        throw ConfigError("checkpoint shape mismatch for " + name);
      t.mutable_values() = vals;
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Tensor> params_;
  std::map<std::string, Moments> moments_;
  long step_ = 0;  // shared across parameters
  std::uint64_t version_ = 0;
};

}  // namespace neurosid
