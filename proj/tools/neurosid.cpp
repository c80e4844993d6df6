// neurosid: simulate benchmark systems, run architecture search over
// neural state space models, and emit plotter-ready reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "neurosid/data.hpp"
#include "neurosid/genome.hpp"
#include "neurosid/report.hpp"
#include "neurosid/search.hpp"
#include "neurosid/ssm.hpp"
#include "neurosid/train.hpp"

namespace fs = std::filesystem;
using namespace neurosid;

namespace {

// "300", "300s", "2s" -> seconds.
double parse_interval(std::string s) {
  if (!s.empty() && s.back() == 's') s.pop_back();
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw CLI::ValidationError("--interval", "expected seconds, got " + s);
  }
}

Trajectory simulate_system(const std::string& system, std::size_t steps,
                           double dt, std::uint64_t seed) {
  if (system == "two_tank") {
    if (dt <= 0.0) dt = 1.0;
    auto policy = random_steps_policy(two_tank_input_ranges(), 20, 100, seed);
    return simulate_two_tank(TwoTankConfig{}, policy, steps, dt);
  }
  if (system == "cstr") {
    if (dt <= 0.0) dt = 0.05;
    auto policy = random_steps_policy(cstr_input_ranges(), 20, 100, seed);
    return simulate_cstr(CSTRConfig{}, policy, steps, dt);
  }
  throw ConfigError("unknown system: " + system +
                    " (expected two_tank or cstr)");
}

std::string default_run_dir() {
  const char* env = std::getenv("NEUROSID_RUN_DIR");
  return env ? env : "";
}

int cmd_simulate(const std::string& system, std::size_t steps, double dt,
                 std::uint64_t seed, const std::string& out) {
  Trajectory tr = simulate_system(system, steps, dt, seed);
  save_csv(tr, out);
  nlohmann::ordered_json cfg;
  cfg["system"] = system;
  cfg["steps"] = steps;
  cfg["dt"] = tr.dt;
  cfg["seed"] = seed;
  std::ofstream cf(out + ".json");
  cf << cfg.dump(2) << '\n';
  std::cout << "wrote " << out << " (" << tr.length() << " steps)\n";
  return 0;
}

struct SearchArgs {
  std::string data;
  std::string system = "two_tank";
  std::size_t steps = 3000;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string algorithm = "aga";
  std::string space = "standard";
  int pool = 50;
  std::string interval = "300s";
  int max_individuals = -1;
  double max_wallclock = -1.0;
  std::string run_dir;
  int workers = 0;
  bool simulated_clock = false;
  int max_epochs = 1000;
};

int cmd_search(const SearchArgs& a) {
  std::string run_dir = a.run_dir.empty() ? default_run_dir() : a.run_dir;
  if (run_dir.empty())
    throw ConfigError("search: --run-dir or NEUROSID_RUN_DIR required");
  fs::create_directories(run_dir);
  fs::create_directories(run_dir + "/data");

  Trajectory tr = a.data.empty()
                      ? simulate_system(a.system, a.steps, a.dt, a.seed)
                      : load_csv(a.data);
  SplitSet splits = prepare_splits(tr);
  save_csv(splits.train, run_dir + "/data/train.csv");
  save_csv(splits.val, run_dir + "/data/val.csv");
  save_csv(splits.test, run_dir + "/data/test.csv");

  SearchConfig cfg;
  cfg.pool_size = a.pool;
  cfg.spawn_interval = parse_interval(a.interval);
  cfg.max_individuals = a.max_individuals;
  cfg.max_wallclock = a.max_wallclock;
  cfg.algo = a.algorithm == "random" ? SearchConfig::Algo::Random
                                     : SearchConfig::Algo::AGA;
  if (a.algorithm != "aga" && a.algorithm != "random")
    throw ConfigError("search: --algorithm must be aga or random");
  cfg.seed = a.seed;
  cfg.simulated_clock = a.simulated_clock;
  cfg.workers = a.workers > 0
                    ? a.workers
                    : std::max(1u, std::thread::hardware_concurrency() - 1);
  DesignSpace space = design_space_from_string(a.space);

  std::size_t n_u = splits.train.n_u(), n_y = splits.train.n_y();
  int max_epochs = a.max_epochs;
  Evaluator eval = [&, n_u, n_y, max_epochs, run_dir](const Individual& ind) {
    DecodedModel dm = decode(ind.genome, n_u, n_y);
    dm.train.max_epochs = max_epochs;
    dm.train.patience = std::min(dm.train.patience, max_epochs);
    SSMInstance model(dm.spec, ind.seed);
    WindowedData windows = make_windows(splits.train, dm.spec.horizon);

    std::string dir = run_dir + "/" + std::to_string(ind.id);
    fs::create_directories(dir);
    {
      nlohmann::ordered_json gj;
      to_json(gj, ind.genome);
      std::ofstream gf(dir + "/genome.json");
      gf << gj.dump(2) << '\n';
    }
    std::ofstream metrics(dir + "/metrics.csv");
    TrainReport report =
        train(model, splits, windows, dm.weights, dm.train, &metrics);
    {
      std::ofstream wf(dir + "/best_weights.json");
      wf << model.store().checkpoint().dump() << '\n';
    }
    TrainOutcome out;
    out.best_val_mse = fitness(report);
    out.epochs_run = report.epochs_run;
    out.failed = report.status == TrainStatus::NumericFailure;
    if (!out.failed)
      out.test_mse = model.open_loop_eval(splits.test.U, splits.test.Y);
    return out;
  };

  Ledger ledger = run_search(cfg, space, eval, run_dir);
  int finished = 0;
  for (const auto& i : ledger.individuals())
    if (i.status == "finished") ++finished;
  std::cout << "search complete: " << ledger.individuals().size()
            << " individuals, " << finished << " finished\n";
  if (finished) {
    const Individual& best = best_individual(ledger);
    std::cout << "best id " << best.id << " val MSE " << best.best_val_mse
              << " test MSE " << best.test_mse << '\n';
  }
  return 0;
}

int cmd_report(const std::string& run_dir_arg) {
  std::string run_dir = run_dir_arg.empty() ? default_run_dir() : run_dir_arg;
  if (run_dir.empty())
    throw ConfigError("report: --run-dir or NEUROSID_RUN_DIR required");
  Ledger ledger = Ledger::load(run_dir + "/ledger.jsonl");
  if (ledger.individuals().empty())
    throw ContractError("report: ledger holds no individuals");
  write_progress_csv(ledger, run_dir + "/progress.csv");
  write_deviations_csv(ledger, run_dir + "/deviations.csv");
  const Individual& best = best_individual(ledger);
  Trajectory test = load_csv(run_dir + "/data/test.csv");
  double mse = write_best_trace_csv(
      ledger, test,
      run_dir + "/" + std::to_string(best.id) + "/best_weights.json",
      run_dir + "/best_trace.csv");
  std::cout << "wrote progress.csv, deviations.csv, best_trace.csv\n"
            << "best id " << best.id << " trace MSE " << mse
            << " (ledger test MSE " << best.test_mse << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural state space model identification toolkit"};
  app.require_subcommand(1);

  std::string sim_system = "two_tank", sim_out = "trajectory.csv";
  std::size_t sim_steps = 3000;
  double sim_dt = 0.0;
  std::uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand("simulate", "generate a benchmark trajectory");
  sim->add_option("--system", sim_system, "two_tank or cstr");
  sim->add_option("--steps", sim_steps, "trajectory length");
  sim->add_option("--dt", sim_dt, "sample time (0 = system default)");
  sim->add_option("--seed", sim_seed, "excitation seed");
  sim->add_option("--out", sim_out, "output CSV path");

  SearchArgs sa;
  auto* se = app.add_subcommand("search", "run architecture search");
  se->add_option("--data", sa.data, "input trajectory CSV (overrides --system)");
  se->add_option("--system", sa.system, "simulator when no --data given");
  se->add_option("--steps", sa.steps, "simulated trajectory length");
  se->add_option("--dt", sa.dt, "sample time (0 = system default)");
  se->add_option("--seed", sa.seed, "search + simulation seed");
  se->add_option("--algorithm", sa.algorithm, "aga or random");
  se->add_option("--space", sa.space, "standard or xl");
  se->add_option("--pool", sa.pool, "concurrent individuals");
  se->add_option("--interval", sa.interval, "spawn interval, e.g. 300s");
  se->add_option("--max-individuals", sa.max_individuals, "total budget");
  se->add_option("--max-wallclock", sa.max_wallclock, "budget in seconds");
  se->add_option("--run-dir", sa.run_dir, "run directory");
  se->add_option("--workers", sa.workers, "worker threads (0 = cores - 1)");
  se->add_flag("--simulated-clock", sa.simulated_clock,
               "deterministic event-count clock");
  se->add_option("--max-epochs", sa.max_epochs, "per-individual epoch cap");

  std::string rep_dir;
  auto* rep = app.add_subcommand("report", "emit report CSVs for a run");
  rep->add_option("--run-dir", rep_dir, "run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(sim_system, sim_steps, sim_dt, sim_seed, sim_out);
    if (se->parsed()) return cmd_search(sa);
    if (rep->parsed()) return cmd_report(rep_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
