#pragma once

// Plotter-ready report CSVs derived from a finished (or partial) search
// ledger: best-so-far validation progress, per-individual deviation from
// the mean log-scaled test loss grouped by model attributes, and the
// open-loop trace of the best individual over the test split.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "neurosid/data.hpp"
#include "neurosid/errors.hpp"
#include "neurosid/genome.hpp"
#include "neurosid/search.hpp"
#include "neurosid/ssm.hpp"

namespace neurosid {

// Grouping keys for the deviation report, readable for either design space.
inline std::string genome_type_key(const Genome& g) {
  if (g.space == DesignSpace::Standard) return g.value("ssm_type");
  return g.value("model_class");
}
inline std::string genome_map_key(const Genome& g) {
  if (g.space == DesignSpace::Standard) return g.value("map");
  return g.value("f_x.map");
}

struct ProgressRow {
  double t = 0.0;
  int id = 0;
  double val_mse = 0.0;
  double best_so_far = 0.0;
};

// One row per successful finish, in ledger event order.
inline std::vector<ProgressRow> progress_rows(const Ledger& ledger) {
  std::vector<ProgressRow> rows;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : ledger.events()) {
    if (e.at("event") != "finish") continue;
    if (e.at("status").get<std::string>() != "finished") continue;
    ProgressRow r;
    r.t = e.at("t").get<double>();
    r.id = e.at("id").get<int>();
    r.val_mse = e.at("best_val_mse").get<double>();
    best = std::min(best, r.val_mse);
    r.best_so_far = best;
    rows.push_back(r);
  }
  return rows;
}

inline void write_progress_csv(const Ledger& ledger, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IngestError("report: cannot write " + path);
  f.precision(17);
  f << "t,id,val_mse,best_val_mse\n";
  for (const auto& r : progress_rows(ledger))
    f << r.t << ',' << r.id << ',' << r.val_mse << ',' << r.best_so_far
      << '\n';
}

struct DeviationRow {
  int id = 0;
  std::string ssm_type;
  std::string linear_map;
  double test_mse = 0.0;
  double deviation = 0.0;  // log10(test) - mean over all rows
};

// log10(test MSE) centered on the population mean, with grouping keys.
inline std::vector<DeviationRow> deviation_rows(const Ledger& ledger) {
  std::vector<DeviationRow> rows;
  for (const auto& i : ledger.individuals()) {
    if (i.status != "finished") continue;
    if (!(i.test_mse > 0.0) || !std::isfinite(i.test_mse)) continue;
    DeviationRow r;
    r.id = i.id;
    r.ssm_type = genome_type_key(i.genome);
    r.linear_map = genome_map_key(i.genome);
    r.test_mse = i.test_mse;
    r.deviation = std::log10(i.test_mse);
    rows.push_back(r);
  }
  if (rows.empty()) return rows;
  double mean = 0.0;
  for (const auto& r : rows) mean += r.deviation;
  mean /= static_cast<double>(rows.size());
  for (auto& r : rows) r.deviation -= mean;
  return rows;
}

inline void write_deviations_csv(const Ledger& ledger,
                                 const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IngestError("report: cannot write " + path);
  f.precision(17);
  f << "id,ssm_type,linear_map,test_mse,deviation\n";
  for (const auto& r : deviation_rows(ledger))
    f << r.id << ',' << r.ssm_type << ',' << r.linear_map << ','
      << r.test_mse << ',' << r.deviation << '\n';
}

inline const Individual& best_individual(const Ledger& ledger) {
  const Individual* best = nullptr;
  for (const auto& i : ledger.individuals()) {
    if (i.status != "finished") continue;
    if (!best || i.best_val_mse < best->best_val_mse ||
        (i.best_val_mse == best->best_val_mse && i.id < best->id))
      best = &i;
  }
  if (!best) throw ContractError("report: no finished individuals in ledger");
  return *best;
}

struct OpenLoopTrace {
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> y;     // ground truth, predicted region
  std::vector<std::vector<double>> yhat;  // model predictions
  double mse = 0.0;
};

// Replays the single uncorrected rollout of open_loop_eval, keeping the
// per-step predictions for plotting.
inline OpenLoopTrace open_loop_trace(const SSMInstance& model,
                                     const Trajectory& traj) {
  const SSMSpec& spec = model.spec();
  if (traj.Y.size() <= spec.past_window)
    throw ContractError("open_loop_trace: trajectory shorter than window");
  NoGradGuard ng;
  std::vector<Tensor> window;
  for (std::size_t k = 0; k < spec.past_window; ++k)
    window.push_back(Tensor({spec.output_dim}, traj.Y[k]));
  Tensor x = model.estimate_state(window);
  OpenLoopTrace out;
  double se = 0.0;
  for (std::size_t k = spec.past_window; k < traj.Y.size(); ++k) {
    x = model.step(x, Tensor({spec.input_dim}, traj.U[k]));
    Tensor yhat = model.observer().forward(x);
    out.steps.push_back(k);
    out.y.push_back(traj.Y[k]);
    out.yhat.push_back(yhat.values());
    for (std::size_t d = 0; d < spec.output_dim; ++d) {
      double e = yhat.value(d) - traj.Y[k][d];
      se += e * e;
    }
  }
  out.mse = se / static_cast<double>(out.steps.size());
  return out;
}

// Rebuilds the best individual from its genome + weight checkpoint and
// writes its open-loop test trace. Returns the recomputed open-loop MSE so
// callers can cross-check it against the ledger's recorded value.
inline double write_best_trace_csv(const Ledger& ledger,
                                   const Trajectory& test,
                                   const std::string& weights_path,
                                   const std::string& out_path) {
  const Individual& best = best_individual(ledger);
  DecodedModel dm = decode(best.genome, test.U.front().size(),
                           test.Y.front().size());
  SSMInstance model(dm.spec, best.seed);
  std::ifstream wf(weights_path);
  if (!wf) throw IngestError("report: cannot open " + weights_path);
  nlohmann::json ckpt = nlohmann::json::parse(wf);
  model.store().load_checkpoint(ckpt);

  OpenLoopTrace trace = open_loop_trace(model, test);
  std::ofstream f(out_path);
  if (!f) throw IngestError("report: cannot write " + out_path);
  f.precision(17);
  f << "step";
  for (std::size_t d = 0; d < test.Y.front().size(); ++d)
    f << ",y_" << d << ",yhat_" << d;
  f << '\n';
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    f << trace.steps[i];
    for (std::size_t d = 0; d < trace.y[i].size(); ++d)
      f << ',' << trace.y[i][d] << ',' << trace.yhat[i][d];
    f << '\n';
  }
  return trace.mse;
}

}  // namespace neurosid
