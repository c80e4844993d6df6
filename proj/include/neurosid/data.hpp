#pragma once

// Trajectory provisioning: RK4 simulators for the two-tank and exothermic
// CSTR benchmarks, piecewise-constant excitation policies, u_/y_ prefixed
// CSV ingestion, train-fitted min-max normalization, contiguous splitting,
// and the non-overlapping N-step windowing used for training.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurosid/errors.hpp"
#include "neurosid/rng.hpp"

namespace neurosid {

struct Trajectory {
  std::vector<std::vector<double>> U;  // T x n_u
  std::vector<std::vector<double>> Y;  // T x n_y
  double dt = 1.0;
  std::vector<std::string> u_names, y_names;

  std::size_t length() const { return Y.size(); }
  std::size_t n_u() const { return U.empty() ? 0 : U.front().size(); }
  std::size_t n_y() const { return Y.empty() ? 0 : Y.front().size(); }
};

// Piecewise-constant input policy: step -> input vector.
using InputPolicy = std::function<std::vector<double>(std::size_t)>;

struct ChannelRange {
  double lo = 0.0, hi = 1.0;
};

// Random step policy: each channel holds a uniform level for a uniform
// random number of samples in [hold_lo, hold_hi].
inline InputPolicy random_steps_policy(const std::vector<ChannelRange>& ranges,
                                       std::size_t hold_lo,
                                       std::size_t hold_hi,
                                       std::uint64_t seed) {
  if (hold_lo < 1 || hold_hi < hold_lo)
    throw ConfigError("random_steps_policy: invalid hold range");
  struct State {
    std::mt19937_64 rng;
    std::vector<double> level;
    std::size_t until = 0;
    std::size_t next_step = 0;
  };
  auto st = std::make_shared<State>();
  st->rng = make_rng(seed);
  st->level.resize(ranges.size(), 0.0);
  return [st, ranges, hold_lo, hold_hi](std::size_t step) {
    // Policies are consulted with non-decreasing step indices.
    while (step >= st->until) {
      for (std::size_t c = 0; c < ranges.size(); ++c)
        st->level[c] = uniform_real(st->rng, ranges[c].lo, ranges[c].hi);
      std::size_t hold =
          hold_lo + uniform_index(st->rng, hold_hi - hold_lo + 1);
      st->until += hold;
    }
    return st->level;
  };
}

namespace detail_sim {

template <typename Deriv>
inline void rk4_step(std::vector<double>& x, const std::vector<double>& u,
                     double dt, Deriv deriv) {
  std::size_t n = x.size();
  std::vector<double> k1 = deriv(x, u), x2(n), k2, x3(n), k3, x4(n), k4;
  for (std::size_t i = 0; i < n; ++i) x2[i] = x[i] + 0.5 * dt * k1[i];
  k2 = deriv(x2, u);
  for (std::size_t i = 0; i < n; ++i) x3[i] = x[i] + 0.5 * dt * k2[i];
  k3 = deriv(x3, u);
  for (std::size_t i = 0; i < n; ++i) x4[i] = x[i] + dt * k3[i];
  k4 = deriv(x4, u);
  for (std::size_t i = 0; i < n; ++i)
    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace detail_sim

// --------------------------------------------------------------------------
// Two-tank system: pump fills tank 1 (and tank 2 through a valve), tank 1
// drains into tank 2, tank 2 drains out.
//   h1' = c1 (1 - v) p - c2 sqrt(h1)
//   h2' = c1 v p + c2 sqrt(h1) - c3 sqrt(h2)
// Inputs p (pump) and v (valve) in [0, 1]; states clamped >= 0.
// --------------------------------------------------------------------------
struct TwoTankConfig {
  double c1 = 0.08;
  double c2 = 0.04;
  double c3 = 0.04;
  double h1_0 = 0.0;
  double h2_0 = 0.0;
};

inline Trajectory simulate_two_tank(const TwoTankConfig& cfg,
                                    const InputPolicy& policy, std::size_t T,
                                    double dt) {
  if (dt <= 0.0) throw ConfigError("simulate_two_tank: dt must be > 0");
  auto deriv = [&cfg](const std::vector<double>& x,
                      const std::vector<double>& u) {
    double h1 = std::max(x[0], 0.0), h2 = std::max(x[1], 0.0);
    double p = u[0], v = u[1];
    return std::vector<double>{
        cfg.c1 * (1.0 - v) * p - cfg.c2 * std::sqrt(h1),
        cfg.c1 * v * p + cfg.c2 * std::sqrt(h1) - cfg.c3 * std::sqrt(h2)};
  };
  Trajectory tr;
  tr.dt = dt;
  tr.u_names = {"u_pump", "u_valve"};
  tr.y_names = {"y_h1", "y_h2"};
  std::vector<double> x = {cfg.h1_0, cfg.h2_0};
  for (std::size_t k = 0; k < T; ++k) {
    std::vector<double> u = policy(k);
    tr.U.push_back(u);
    tr.Y.push_back(x);
    detail_sim::rk4_step(x, u, dt, deriv);
    x[0] = std::max(x[0], 0.0);
    x[1] = std::max(x[1], 0.0);
  }
  return tr;
}

// --------------------------------------------------------------------------
// Non-adiabatic exothermic CSTR with two states (concentration C_A and
// temperature T) and three inputs (flow q, feed concentration C_Af,
// coolant temperature T_c):
//   C_A' = (q/V)(C_Af - C_A) - k0 exp(-E/(R T)) C_A
//   T'   = (q/V)(T_f - T) + (-dH/(rho Cp)) k0 exp(-E/(R T)) C_A
//          + (UA/(V rho Cp))(T_c - T)
// --------------------------------------------------------------------------
struct CSTRConfig {
  double volume = 100.0;      // L
  double k0 = 7.2e10;         // 1/min
  double e_over_r = 8750.0;   // K
  double neg_dh = 5.0e4;      // J/mol
  double rho = 1000.0;        // g/L
  double cp = 0.239;          // J/(g K)
  double ua = 5.0e4;          // J/(min K)
  double t_feed = 350.0;      // K
  double ca_0 = 0.5;          // mol/L
  double t_0 = 350.0;         // K
};

inline Trajectory simulate_cstr(const CSTRConfig& cfg,
                                const InputPolicy& policy, std::size_t T,
                                double dt) {
  if (dt <= 0.0) throw ConfigError("simulate_cstr: dt must be > 0");
  auto deriv = [&cfg](const std::vector<double>& x,
                      const std::vector<double>& u) {
    double ca = x[0], temp = x[1];
    double q = u[0], caf = u[1], tc = u[2];
    double rate = cfg.k0 * std::exp(-cfg.e_over_r / temp) * ca;
    double qv = q / cfg.volume;
    return std::vector<double>{
        qv * (caf - ca) - rate,
        qv * (cfg.t_feed - temp) + cfg.neg_dh / (cfg.rho * cfg.cp) * rate +
            cfg.ua / (cfg.volume * cfg.rho * cfg.cp) * (tc - temp)};
  };
  Trajectory tr;
  tr.dt = dt;
  tr.u_names = {"u_q", "u_caf", "u_tc"};
  tr.y_names = {"y_ca", "y_temp"};
  std::vector<double> x = {cfg.ca_0, cfg.t_0};
  for (std::size_t k = 0; k < T; ++k) {
    std::vector<double> u = policy(k);
    tr.U.push_back(u);
    tr.Y.push_back(x);
    detail_sim::rk4_step(x, u, dt, deriv);
  }
  return tr;
}

inline std::vector<ChannelRange> two_tank_input_ranges() {
  return {{0.0, 1.0}, {0.0, 1.0}};
}

inline std::vector<ChannelRange> cstr_input_ranges() {
  return {{90.0, 110.0}, {0.9, 1.1}, {295.0, 305.0}};
}

// --------------------------------------------------------------------------
// CSV: header row with u_/y_ prefixed column names, then one row per step.
// A "# dt=<seconds>" comment line carries the sample time.
// --------------------------------------------------------------------------
inline void save_csv(const Trajectory& tr, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IngestError("save_csv: cannot open " + path);
  f << "# dt=" << tr.dt << "\n";
  for (std::size_t i = 0; i < tr.u_names.size(); ++i)
    f << (i ? "," : "") << tr.u_names[i];
  for (const auto& n : tr.y_names) f << "," << n;
  f << "\n";
  f.precision(17);
  for (std::size_t k = 0; k < tr.length(); ++k) {
    for (std::size_t i = 0; i < tr.U[k].size(); ++i)
      f << (i ? "," : "") << tr.U[k][i];
    for (double v : tr.Y[k]) f << "," << v;
    f << "\n";
  }
}

inline Trajectory load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("load_csv: cannot open " + path);
  Trajectory tr;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<bool> is_u;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("dt=");
      if (pos != std::string::npos) tr.dt = std::stod(line.substr(pos + 3));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      for (const auto& c : cells) {
        if (c.rfind("u_", 0) == 0) {
          is_u.push_back(true);
          tr.u_names.push_back(c);
        } else if (c.rfind("y_", 0) == 0) {
          is_u.push_back(false);
          tr.y_names.push_back(c);
        } else {
          throw IngestError("load_csv: column '" + c +
                            "' lacks u_/y_ prefix (line " +
                            std::to_string(lineno) + ")");
        }
      }
      if (tr.u_names.empty() || tr.y_names.empty())
        throw IngestError("load_csv: need at least one u_ and one y_ column");
      have_header = true;
      continue;
    }
    if (cells.size() != is_u.size())
      throw IngestError("load_csv: ragged row at line " +
                        std::to_string(lineno));
    std::vector<double> u, y;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v;
      try {
        std::size_t used = 0;
        v = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw IngestError("load_csv: non-numeric cell at line " +
                          std::to_string(lineno) + ", column " +
                          std::to_string(i + 1));
      }
      (is_u[i] ? u : y).push_back(v);
    }
    tr.U.push_back(std::move(u));
    tr.Y.push_back(std::move(y));
  }
  if (!have_header) throw IngestError("load_csv: missing header row");
  return tr;
}

// --------------------------------------------------------------------------
// Normalization and splitting
// --------------------------------------------------------------------------

// Per-channel affine min-max transform fit on the training split.
// A degenerate channel (max == min) maps to constant 0.5.
struct Normalizer {
  std::vector<double> u_lo, u_hi, y_lo, y_hi;

  static Normalizer fit(const Trajectory& train) {
    Normalizer n;
    auto fit_one = [](const std::vector<std::vector<double>>& rows,
                      std::vector<double>& lo, std::vector<double>& hi) {
      if (rows.empty()) return;
      lo = rows.front();
      hi = rows.front();
      for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
          lo[c] = std::min(lo[c], r[c]);
          hi[c] = std::max(hi[c], r[c]);
        }
    };
    fit_one(train.U, n.u_lo, n.u_hi);
    fit_one(train.Y, n.y_lo, n.y_hi);
    return n;
  }

  static double fwd(double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.5;
  }
  static double inv(double v, double lo, double hi) {
    return hi > lo ? lo + v * (hi - lo) : lo;
  }

  std::vector<double> normalize_u(const std::vector<double>& u) const {
    std::vector<double> out(u.size());
    for (std::size_t c = 0; c < u.size(); ++c)
      out[c] = fwd(u[c], u_lo[c], u_hi[c]);
    return out;
  }
  std::vector<double> normalize_y(const std::vector<double>& y) const {
    std::vector<double> out(y.size());
    for (std::size_t c = 0; c < y.size(); ++c)
      out[c] = fwd(y[c], y_lo[c], y_hi[c]);
    return out;
  }
  std::vector<double> denormalize_y(const std::vector<double>& y) const {
    std::vector<double> out(y.size());
    for (std::size_t c = 0; c < y.size(); ++c)
      out[c] = inv(y[c], y_lo[c], y_hi[c]);
    return out;
  }

  Trajectory apply(const Trajectory& tr) const {
    Trajectory out = tr;
    for (auto& u : out.U) u = normalize_u(u);
    for (auto& y : out.Y) y = normalize_y(y);
    return out;
  }
};

// Contiguous, disjoint, time-ordered train/val/test splits, already
// normalized with statistics fit on train only.
struct SplitSet {
  Trajectory train, val, test;
  Normalizer norm;
};

inline SplitSet prepare_splits(const Trajectory& tr, double train_frac = 1.0 / 3,
                               double val_frac = 1.0 / 3) {
  std::size_t t = tr.length();
  std::size_t n_train = static_cast<std::size_t>(t * train_frac);
  std::size_t n_val = static_cast<std::size_t>(t * val_frac);
  if (n_train == 0 || n_val == 0 || n_train + n_val >= t)
    throw ContractError("prepare_splits: trajectory too short");
  auto cut = [&tr](std::size_t b, std::size_t e) {
    Trajectory s;
    s.dt = tr.dt;
    s.u_names = tr.u_names;
    s.y_names = tr.y_names;
    s.U.assign(tr.U.begin() + b, tr.U.begin() + e);
    s.Y.assign(tr.Y.begin() + b, tr.Y.begin() + e);
    return s;
  };
  SplitSet out;
  out.train = cut(0, n_train);
  out.val = cut(n_train, n_train + n_val);
  out.test = cut(n_train + n_val, t);
  out.norm = Normalizer::fit(out.train);
  out.train = out.norm.apply(out.train);
  out.val = out.norm.apply(out.val);
  out.test = out.norm.apply(out.test);
  return out;
}

// One training segment: N_p-step past output window plus the N-step future.
struct Window {
  std::vector<std::vector<double>> past_y;  // N_p x n_y
  std::vector<std::vector<double>> fut_u;   // N x n_u
  std::vector<std::vector<double>> fut_y;   // N x n_y
};

// Consecutive non-overlapping N-step segments (N_p = N); segment s+1's past
// window is exactly segment s's future outputs, which is what the arrival
// cost pairs up.
struct WindowedData {
  std::vector<Window> segments;
  std::size_t horizon = 0;
};

inline WindowedData make_windows(const Trajectory& tr, std::size_t n) {
  if (n < 1) throw ConfigError("make_windows: horizon must be >= 1");
  WindowedData out;
  out.horizon = n;
  if (tr.length() < 2 * n) return out;
  std::size_t count = (tr.length() - n) / n;
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t base = s * n;  // past window starts here
    Window w;
    for (std::size_t k = 0; k < n; ++k) {
      w.past_y.push_back(tr.Y[base + k]);
      w.fut_u.push_back(tr.U[base + n + k]);
      w.fut_y.push_back(tr.Y[base + n + k]);
    }
    out.segments.push_back(std::move(w));
  }
  return out;
}

}  // namespace neurosid
