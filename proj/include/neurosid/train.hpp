#pragma once

// Full-batch training of one SSM instance: one AdamW step per epoch over
// all training segments, per-epoch open-loop validation, early stopping on
// validation MSE, and restoration of the best-validation parameters.

#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "neurosid/data.hpp"
#include "neurosid/loss.hpp"
#include "neurosid/ssm.hpp"

namespace neurosid {

struct TrainConfig {
  double lr = 2e-3;
  int max_epochs = 1000;
  int patience = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Survives exotic search-space configurations; a crash is information loss.
  double grad_clip = 100.0;
};

enum class TrainStatus { ConvergedEarly, MaxEpochs, NumericFailure };

inline const char* to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::ConvergedEarly: return "converged-early";
    case TrainStatus::MaxEpochs: return "max-epochs";
    case TrainStatus::NumericFailure: return "numeric-failure";
  }
  return "?";
}

struct EpochMetrics {
  int epoch = 0;
  double train_total = 0, l_y = 0, l_est = 0, l_dx = 0, l_con_y = 0,
         l_con_fu = 0, l_reg = 0;
  double val_open_mse = 0;
  bool clipped = false;
};

struct TrainReport {
  double best_val_mse = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  TrainStatus status = TrainStatus::MaxEpochs;
  std::vector<EpochMetrics> series;
  int clip_events = 0;
};

inline const char* metrics_csv_header() {
  return "epoch,train_total,L_y,L_est,L_dx,L_con_y,L_con_fu,L_reg,"
         "val_open_mse";
}

inline void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  os.precision(17);
  os << m.epoch << ',' << m.train_total << ',' << m.l_y << ',' << m.l_est
     << ',' << m.l_dx << ',' << m.l_con_y << ',' << m.l_con_fu << ','
     << m.l_reg << ',' << m.val_open_mse << '\n';
}

// Builds the full-batch loss graph over all training segments.
inline LossComponents training_loss_components(const SSMInstance& model,
                                               const WindowedData& data,
                                               const Bounds& bounds) {
  std::size_t n_y = model.spec().output_dim;
  std::size_t n_u = model.spec().input_dim;
  bool block = model.spec().model_class == ModelClass::Block;

  Tensor ly = Tensor::scalar(0.0), lest = Tensor::scalar(0.0),
         ldx = Tensor::scalar(0.0), lcy = Tensor::scalar(0.0),
         lcf = Tensor::scalar(0.0);
  std::size_t nseg = data.segments.size();
  if (nseg == 0) throw ContractError("training data holds no segments");

  Tensor last_state;
  std::size_t boundary_count = 0;
  Tensor lest_acc = Tensor::scalar(0.0);

  for (std::size_t s = 0; s < nseg; ++s) {
    const Window& w = data.segments[s];
    std::vector<Tensor> past, us, ys;
    for (const auto& row : w.past_y) past.push_back(Tensor({n_y}, row));
    for (const auto& row : w.fut_u) us.push_back(Tensor({n_u}, row));
    for (const auto& row : w.fut_y) ys.push_back(Tensor({n_y}, row));
    RolloutResult r = model.rollout(past, us);

    ly = add(ly, prediction_loss(r.predictions, ys));
    ldx = add(ldx, smoothing_loss(r.states));
    lcy = add(lcy, bound_penalty(r.predictions, bounds.y_lower, bounds.y_upper));
    if (block)
      lcf = add(lcf,
                bound_penalty(r.fu_outputs, bounds.fu_lower, bounds.fu_upper));
    // Arrival cost pairs this segment's estimator output with the previous
    // segment's final rolled state; the final segment has no successor.
    if (s > 0) {
      lest_acc = add(lest_acc, arrival_loss(r.x_est, last_state));
      ++boundary_count;
    }
    last_state = r.states.back();
  }
  double inv = 1.0 / static_cast<double>(nseg);
  LossComponents c;
  c.l_y = scale(ly, inv);
  c.l_dx = scale(ldx, inv);
  c.l_con_y = scale(lcy, inv);
  c.l_con_fu = block ? scale(lcf, inv) : Tensor::scalar(0.0);
  c.l_est = boundary_count
                ? scale(lest_acc, 1.0 / static_cast<double>(boundary_count))
                : Tensor::scalar(0.0);
  c.l_reg = model.regularization_loss();
  return c;
}

inline TrainReport train(SSMInstance& model, const SplitSet& splits,
                         const WindowedData& train_windows,
                         const LossWeights& weights, const TrainConfig& cfg,
                         std::ostream* metrics_csv = nullptr,
                         const Bounds& bounds = Bounds{}) {
  if (cfg.patience > cfg.max_epochs)
    throw ConfigError("train: patience must be <= max_epochs");
  AdamWConfig adamw{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  TrainReport report;
  std::map<std::string, std::vector<double>> best_snapshot =
      model.store().snapshot();
  if (metrics_csv) (*metrics_csv) << metrics_csv_header() << '\n';

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    try {
      model.store().zero_grads();
      LossComponents c = training_loss_components(model, train_windows, bounds);
      Tensor total = total_loss(c, weights);
      m.train_total = total.value();
      m.l_y = c.l_y.value();
      m.l_est = c.l_est.value();
      m.l_dx = c.l_dx.value();
      m.l_con_y = c.l_con_y.value();
      m.l_con_fu = c.l_con_fu.value();
      m.l_reg = c.l_reg.value();
      backward(total);
      m.clipped = model.store().clip_grads(cfg.grad_clip);
      if (m.clipped) ++report.clip_events;
      model.store().adamw_step(adamw);
      m.val_open_mse = model.open_loop_eval(splits.val.U, splits.val.Y);
      if (!std::isfinite(m.val_open_mse))
        throw NumericError("validation MSE non-finite");
    } catch (const NumericError&) {
      report.status = TrainStatus::NumericFailure;
      report.epochs_run = epoch;
      break;
    }
    report.series.push_back(m);
    if (metrics_csv) write_metrics_row(*metrics_csv, m);
    report.epochs_run = epoch;
    if (m.val_open_mse < report.best_val_mse) {
      report.best_val_mse = m.val_open_mse;
      report.best_epoch = epoch;
      best_snapshot = model.store().snapshot();
    }
    if (epoch - report.best_epoch >= cfg.patience) {
      report.status = TrainStatus::ConvergedEarly;
      break;
    }
  }
  if (report.status != TrainStatus::ConvergedEarly &&
      report.status != TrainStatus::NumericFailure)
    report.status = TrainStatus::MaxEpochs;
  // Parameters go back to the best-validation epoch (or the last finite
  // checkpoint when training blew up).
  model.store().restore(best_snapshot);
  return report;
}

/// Search-facing score: lower is better; failed runs sort last.
inline double fitness(const TrainReport& report) {
  if (report.status == TrainStatus::NumericFailure ||
      !std::isfinite(report.best_val_mse))
    return std::numeric_limits<double>::infinity();
  return report.best_val_mse;
}

}  // namespace neurosid
