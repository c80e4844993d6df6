#pragma once

// The standard and XL design spaces: fixed-length trait vectors over
// ordered ring buffers, the random/mutation/crossover operators, and the
// decoder from genome to model spec plus loss weights.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurosid/errors.hpp"
#include "neurosid/loss.hpp"
#include "neurosid/rng.hpp"
#include "neurosid/ssm.hpp"
#include "neurosid/train.hpp"

namespace neurosid {

enum class DesignSpace { Standard, XL };

inline const char* to_string(DesignSpace s) {
  return s == DesignSpace::Standard ? "standard" : "xl";
}
inline DesignSpace design_space_from_string(const std::string& s) {
  if (s == "standard") return DesignSpace::Standard;
  if (s == "xl") return DesignSpace::XL;
  throw ConfigError("unknown design space: " + s);
}

// One trait: an ordered value ring. Mutation steps wrap across the ends.
struct GeneDef {
  std::string name;
  std::vector<std::string> values;
};

namespace detail_genome {

inline const std::vector<std::string>& layers_ring() {
  static const std::vector<std::string> v = {"1", "2", "3", "4", "5"};
  return v;
}
inline const std::vector<std::string>& nodes_ring() {
  static const std::vector<std::string> v = {"4", "8", "16", "32"};
  return v;
}
inline const std::vector<std::string>& horizon_ring() {
  static const std::vector<std::string> v = {"4", "8", "16", "32", "64"};
  return v;
}
inline const std::vector<std::string>& q_ring() {
  static const std::vector<std::string> v = {"0.0", "0.1", "1.0", "10.0"};
  return v;
}
inline const std::vector<std::string>& lambda_min_ring() {
  static const std::vector<std::string> v = {"0.0", "0.1", "0.3", "0.5"};
  return v;
}
inline const std::vector<std::string>& lambda_max_ring() {
  static const std::vector<std::string> v = {"0.8", "0.9", "1.0", "1.1",
                                             "1.2"};
  return v;
}
inline const std::vector<std::string>& map_ring() {
  static const std::vector<std::string> v = {"linear",  "lasso",
                                             "butterfly", "softsvd",
                                             "householdersvd", "pf"};
  return v;
}
inline const std::vector<std::string>& nonlin_ring() {
  static const std::vector<std::string> v = {"mlp", "rmlp", "rnn"};
  return v;
}
inline const std::vector<std::string>& component_ring() {
  static const std::vector<std::string> v = {"lm", "mlp", "rmlp", "rnn"};
  return v;
}
inline const std::vector<std::string>& activation_ring() {
  static const std::vector<std::string> v = {"relu", "gelu", "blu", "softexp"};
  return v;
}

inline std::vector<GeneDef> build_standard() {
  std::vector<GeneDef> g;
  g.push_back({"ssm_type",
               {"linear", "hammerstein", "hammerstein-wiener",
                "block-nonlinear", "black-box"}});
  g.push_back({"estimator", component_ring()});
  g.push_back({"map", map_ring()});
  g.push_back({"nonlin", nonlin_ring()});
  g.push_back({"activation", activation_ring()});
  g.push_back({"layers", layers_ring()});
  g.push_back({"nodes", nodes_ring()});
  g.push_back({"lambda_min", lambda_min_ring()});
  g.push_back({"lambda_max", lambda_max_ring()});
  g.push_back({"N", horizon_ring()});
  g.push_back({"q_con_fu", q_ring()});
  g.push_back({"q_con_y", q_ring()});
  g.push_back({"q_reg", q_ring()});
  g.push_back({"q_dx", q_ring()});
  g.push_back({"q_est", q_ring()});
  return g;
}

inline std::vector<GeneDef> build_xl() {
  std::vector<GeneDef> g;
  g.push_back({"model_class", {"black-box", "block"}});
  // In the black-box class the f_x genes configure f_xu and the f_u genes
  // are retained but inert, keeping the vector length fixed.
  for (const char* comp : {"f_x", "f_u", "f_y", "f_o"}) {
    std::string p = comp;
    g.push_back({p + ".kind", component_ring()});
    g.push_back({p + ".map", map_ring()});
    g.push_back({p + ".activation", activation_ring()});
    g.push_back({p + ".layers", layers_ring()});
    g.push_back({p + ".nodes", nodes_ring()});
    g.push_back({p + ".lambda_min", lambda_min_ring()});
    g.push_back({p + ".lambda_max", lambda_max_ring()});
  }
  g.push_back({"operator", {"+", "x", "+/x"}});
  g.push_back({"N", horizon_ring()});
  g.push_back({"q_con_fu", q_ring()});
  g.push_back({"q_con_y", q_ring()});
  g.push_back({"q_reg", q_ring()});
  g.push_back({"q_dx", q_ring()});
  g.push_back({"q_est", q_ring()});
  return g;
}

}  // namespace detail_genome

inline const std::vector<GeneDef>& gene_table(DesignSpace space) {
  static const std::vector<GeneDef> std_table = detail_genome::build_standard();
  static const std::vector<GeneDef> xl_table = detail_genome::build_xl();
  return space == DesignSpace::Standard ? std_table : xl_table;
}

struct Genome {
  DesignSpace space = DesignSpace::Standard;
  std::vector<int> idx;

  const std::string& value(const std::string& gene_name) const {
    const auto& table = gene_table(space);
    for (std::size_t i = 0; i < table.size(); ++i)
      if (table[i].name == gene_name) return table[i].values[idx[i]];
    throw ConfigError("unknown gene: " + gene_name);
  }

  bool operator==(const Genome& o) const {
    return space == o.space && idx == o.idx;
  }
};

inline double cardinality(DesignSpace space) {
  double c = 1.0;
  for (const auto& g : gene_table(space)) c *= static_cast<double>(g.values.size());
  return c;
}

inline Genome random_genome(DesignSpace space, std::mt19937_64& rng) {
  const auto& table = gene_table(space);
  Genome g;
  g.space = space;
  g.idx.reserve(table.size());
  for (const auto& gene : table)
    g.idx.push_back(static_cast<int>(uniform_index(rng, gene.values.size())));
  return g;
}

// Steps exactly one uniformly chosen gene to a neighboring ring position,
// wrapping across the ends.
inline Genome mutate(const Genome& g, std::mt19937_64& rng) {
  const auto& table = gene_table(g.space);
  Genome out = g;
  std::size_t pos = uniform_index(rng, table.size());
  int n = static_cast<int>(table[pos].values.size());
  int step = uniform_real(rng) < 0.5 ? 1 : -1;
  out.idx[pos] = ((out.idx[pos] + step) % n + n) % n;
  return out;
}

// Fitness-weighted uniform crossover; fit values are transformed scores
// where higher is better.
inline Genome crossover(const Genome& a, const Genome& b, double fit_a,
                        double fit_b, std::mt19937_64& rng) {
  if (a.space != b.space) throw ConfigError("crossover: design space mismatch");
  double p_a = fit_a + fit_b > 0.0 ? fit_a / (fit_a + fit_b) : 0.5;
  Genome out = a;
  for (std::size_t i = 0; i < a.idx.size(); ++i)
    out.idx[i] = uniform_real(rng) < p_a ? a.idx[i] : b.idx[i];
  return out;
}

// Transform from validation MSE (lower better) to the crossover weight
// (higher better). The raw-MSE alternative is available behind the flag.
inline double crossover_fitness_score(double best_val_mse,
                                      bool reciprocal = true) {
  return reciprocal ? 1.0 / (1e-12 + best_val_mse) : best_val_mse;
}

inline void to_json(nlohmann::ordered_json& j, const Genome& g) {
  j = nlohmann::ordered_json::object();
  j["design_space"] = to_string(g.space);
  const auto& table = gene_table(g.space);
  nlohmann::ordered_json genes = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < table.size(); ++i)
    genes[table[i].name] = table[i].values[g.idx[i]];
  j["genes"] = genes;
}

inline void from_json(const nlohmann::json& j, Genome& g) {
  g.space = design_space_from_string(j.at("design_space").get<std::string>());
  const auto& table = gene_table(g.space);
  g.idx.assign(table.size(), 0);
  const auto& genes = j.at("genes");
  for (std::size_t i = 0; i < table.size(); ++i) {
    std::string v = genes.at(table[i].name).get<std::string>();
    auto it =
        std::find(table[i].values.begin(), table[i].values.end(), v);
    if (it == table[i].values.end())
      throw ConfigError("gene " + table[i].name + ": unknown value " + v);
    g.idx[i] = static_cast<int>(it - table[i].values.begin());
  }
}

struct DecodedModel {
  SSMSpec spec;
  LossWeights weights;
  TrainConfig train;  // horizon-independent defaults pass through unchanged
};

namespace detail_genome {

inline std::size_t to_sz(const std::string& s) {
  return static_cast<std::size_t>(std::stoul(s));
}
inline double to_d(const std::string& s) { return std::stod(s); }

}  // namespace detail_genome

// Total over the design space: every genome decodes to a valid spec.
inline DecodedModel decode(const Genome& g, std::size_t n_u, std::size_t n_y,
                           std::size_t n_x = 20) {
  using detail_genome::to_d;
  using detail_genome::to_sz;
  DecodedModel out;
  SSMSpec& spec = out.spec;
  spec.input_dim = n_u;
  spec.output_dim = n_y;
  spec.state_dim = n_x;
  spec.horizon = to_sz(g.value("N"));
  spec.past_window = spec.horizon;

  out.weights.q_y = 1.0;
  out.weights.q_con_fu = to_d(g.value("q_con_fu"));
  out.weights.q_con_y = to_d(g.value("q_con_y"));
  out.weights.q_reg = to_d(g.value("q_reg"));
  out.weights.q_dx = to_d(g.value("q_dx"));
  out.weights.q_est = to_d(g.value("q_est"));

  if (g.space == DesignSpace::Standard) {
    MapKind map = map_kind_from_string(g.value("map"));
    BlockKind nonlin = block_kind_from_string(g.value("nonlin"));
    ActivationKind act = activation_from_string(g.value("activation"));
    double lmin = to_d(g.value("lambda_min"));
    double lmax = to_d(g.value("lambda_max"));
    auto shared = [&](BlockKind kind) {
      BlockConfig c;
      c.kind = kind;
      c.map_kind = map;
      c.activation = act;
      c.layers = to_sz(g.value("layers"));
      c.hidden = to_sz(g.value("nodes"));
      c.lambda_min = lmin;
      c.lambda_max = lmax;
      // Genome-decoded Lasso maps defer their strength to Q_reg.
      c.lasso_weight = 1.0;
      return c;
    };
    spec.f_o = shared(block_kind_from_string(g.value("estimator")));
    const std::string& type = g.value("ssm_type");
    if (type == "black-box") {
      spec.model_class = ModelClass::BlackBox;
      spec.f_xu = shared(nonlin);
      spec.f_y = shared(nonlin);
    } else {
      spec.model_class = ModelClass::Block;
      spec.op = StepOp::Add;  // the standard space omits the operator gene
      bool fx_linear = type != "block-nonlinear";
      bool fu_linear = type == "linear";
      bool fy_linear = type != "hammerstein-wiener";
      spec.f_x = shared(fx_linear ? BlockKind::LM : nonlin);
      spec.f_u = shared(fu_linear ? BlockKind::LM : nonlin);
      spec.f_y = shared(fy_linear ? BlockKind::LM : nonlin);
      // The Linear type is literally linear end to end: the estimator gene
      // is overridden so superposition holds through the initial state.
      if (type == "linear") spec.f_o.kind = BlockKind::LM;
    }
    return out;
  }

  // XL space: fully decoupled components.
  auto component = [&](const std::string& p) {
    BlockConfig c;
    c.kind = block_kind_from_string(g.value(p + ".kind"));
    c.map_kind = map_kind_from_string(g.value(p + ".map"));
    c.activation = activation_from_string(g.value(p + ".activation"));
    c.layers = to_sz(g.value(p + ".layers"));
    c.hidden = to_sz(g.value(p + ".nodes"));
    c.lambda_min = to_d(g.value(p + ".lambda_min"));
    c.lambda_max = to_d(g.value(p + ".lambda_max"));
    c.lasso_weight = 1.0;
    return c;
  };
  spec.f_o = component("f_o");
  spec.f_y = component("f_y");
  if (g.value("model_class") == "black-box") {
    spec.model_class = ModelClass::BlackBox;
    spec.f_xu = component("f_x");  // f_u genes are inert here
  } else {
    spec.model_class = ModelClass::Block;
    spec.f_x = component("f_x");
    spec.f_u = component("f_u");
    spec.op = step_op_from_string(g.value("operator"));
  }
  return out;
}

}  // namespace neurosid
