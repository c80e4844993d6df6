#pragma once

// Asynchronous genetic search and the random-search baseline. A bounded
// pool of individuals trains concurrently; at each spawn tick the number
// of newly dispatched individuals equals the number that finished since
// the last tick. New individuals come from the random, mutation, or
// crossover operator, with the random-birth probability annealed
// geometrically per tick. A simulated-clock mode replaces wall-time ticks
// with deterministic event-count time for reproducible runs.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "neurosid/errors.hpp"
#include "neurosid/genome.hpp"
#include "neurosid/rng.hpp"

namespace neurosid {

struct SearchConfig {
  int pool_size = 50;
  double spawn_interval = 300.0;  // seconds (abstract units under sim clock)
  double p_mut = 0.2;             // p_cross is 1 - p_mut
  double p_birth0 = 1.0;
  double anneal_k = 0.5;
  int max_individuals = -1;    // total budget, counting the initial pool
  double max_wallclock = -1;   // seconds; <0 disables
  enum class Algo { AGA, Random };
  Algo algo = Algo::AGA;
  std::uint64_t seed = 0;
  bool simulated_clock = false;
  bool reciprocal_fitness = true;
  int workers = 1;
};

inline const char* to_string(SearchConfig::Algo a) {
  return a == SearchConfig::Algo::AGA ? "aga" : "random";
}

enum class Lineage { Random, Mutation, Crossover };

inline const char* to_string(Lineage l) {
  switch (l) {
    case Lineage::Random: return "random";
    case Lineage::Mutation: return "mutation";
    case Lineage::Crossover: return "crossover";
  }
  return "?";
}
inline Lineage lineage_from_string(const std::string& s) {
  if (s == "random") return Lineage::Random;
  if (s == "mutation") return Lineage::Mutation;
  if (s == "crossover") return Lineage::Crossover;
  throw ConfigError("unknown lineage: " + s);
}

struct Individual {
  int id = 0;
  Genome genome;
  std::uint64_t seed = 0;
  Lineage lineage = Lineage::Random;
  std::vector<int> parents;
  std::string status = "pending";  // pending -> training -> finished|failed
  double best_val_mse = std::numeric_limits<double>::infinity();
  double test_mse = std::numeric_limits<double>::infinity();
  int epochs_run = 0;
  double dispatch_time = 0.0;
  double finish_time = 0.0;
};

struct TrainOutcome {
  double best_val_mse = std::numeric_limits<double>::infinity();
  double test_mse = std::numeric_limits<double>::infinity();
  int epochs_run = 0;
  bool failed = false;
};

// Trains one candidate (genome, seed) and reports results. Implementations
// must be safe to call from multiple worker threads.
using Evaluator = std::function<TrainOutcome(const Individual&)>;

// Thrown by an evaluator to abort a search mid-run (used to exercise
// resume-from-ledger).
struct SearchInterrupted : std::runtime_error {
  SearchInterrupted() : std::runtime_error("search interrupted") {}
};

// Annealed random-birth probability; iteration 0 is the initial population.
inline double birth_probability(const SearchConfig& cfg, int iteration) {
  double p = cfg.p_birth0;
  for (int i = 0; i < iteration; ++i) p *= cfg.anneal_k;
  return p;
}

// Operator draw for one new individual.
inline Lineage next_operator(double p_birth, double p_mut,
                             std::mt19937_64& rng) {
  if (uniform_real(rng) < p_birth) return Lineage::Random;
  return uniform_real(rng) < p_mut ? Lineage::Mutation : Lineage::Crossover;
}

// Append-only record of every dispatched candidate plus spawn-phase events.
class Ledger {
 public:
  void attach_file(const std::string& path, bool append) {
    file_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!file_) throw IngestError("ledger: cannot open " + path);
  }

  const std::vector<Individual>& individuals() const { return inds_; }
  const std::vector<nlohmann::ordered_json>& events() const { return events_; }

  Individual& by_id(int id) {
    for (auto& i : inds_)
      if (i.id == id) return i;
    throw ContractError("ledger: unknown individual id");
  }

  void record_dispatch(const Individual& ind) {
    inds_.push_back(ind);
    nlohmann::ordered_json e;
    e["event"] = "dispatch";
    e["t"] = ind.dispatch_time;
    e["id"] = ind.id;
    e["seed"] = ind.seed;
    e["lineage"] = to_string(ind.lineage);
    e["parents"] = ind.parents;
    nlohmann::ordered_json gj;
    to_json(gj, ind.genome);
    e["genome"] = gj;
    emit(e);
  }

  void record_finish(const Individual& ind) {
    Individual& stored = by_id(ind.id);
    stored = ind;
    nlohmann::ordered_json e;
    e["event"] = "finish";
    e["t"] = ind.finish_time;
    e["id"] = ind.id;
    e["status"] = ind.status;
    e["best_val_mse"] = ind.best_val_mse;
    e["test_mse"] = ind.test_mse;
    e["epochs"] = ind.epochs_run;
    emit(e);
  }

  void record_tick(double t, int iteration, int finished, int spawned,
                   double p_birth) {
    nlohmann::ordered_json e;
    e["event"] = "tick";
    e["t"] = t;
    e["iteration"] = iteration;
    e["finished_since_last"] = finished;
    e["spawned"] = spawned;
    e["p_birth"] = p_birth;
    emit(e);
  }

  static Ledger load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("ledger: cannot open " + path);
    Ledger led;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      nlohmann::json e = nlohmann::json::parse(line);
      led.events_.push_back(e);
      std::string kind = e.at("event").get<std::string>();
      if (kind == "dispatch") {
        Individual ind;
        ind.id = e.at("id").get<int>();
        ind.seed = e.at("seed").get<std::uint64_t>();
        ind.lineage = lineage_from_string(e.at("lineage").get<std::string>());
        ind.parents = e.at("parents").get<std::vector<int>>();
        from_json(e.at("genome"), ind.genome);
        ind.dispatch_time = e.at("t").get<double>();
        ind.status = "training";
        led.inds_.push_back(ind);
      } else if (kind == "finish") {
        Individual& ind = led.by_id(e.at("id").get<int>());
        ind.status = e.at("status").get<std::string>();
        ind.best_val_mse = e.at("best_val_mse").get<double>();
        ind.test_mse = e.at("test_mse").get<double>();
        ind.epochs_run = e.at("epochs").get<int>();
        ind.finish_time = e.at("t").get<double>();
      }
    }
    return led;
  }

  // Replays spawn-phase state for resuming.
  int last_iteration() const {
    int it = 0;
    for (const auto& e : events_)
      if (e.at("event") == "tick") it = e.at("iteration").get<int>();
    return it;
  }
  double last_tick_time() const {
    double t = 0.0;
    for (const auto& e : events_)
      if (e.at("event") == "tick") t = e.at("t").get<double>();
    return t;
  }

  int fitness_reads = 0;  // instrumentation: how often selection consulted MSE

 private:
  void emit(const nlohmann::ordered_json& e) {
    events_.push_back(e);
    if (file_.is_open()) {
      file_ << e.dump() << '\n';
      file_.flush();
    }
  }

  std::vector<Individual> inds_;
  std::vector<nlohmann::ordered_json> events_;
  std::ofstream file_;
};

// Ranked parent pool: finished (non-failed) individuals sorted ascending by
// best validation MSE, ties broken by earlier id; parents come uniformly
// from the top half (ceil, minimum one).
inline std::vector<const Individual*> parent_pool(const Ledger& ledger) {
  std::vector<const Individual*> fin;
  for (const auto& i : ledger.individuals())
    if (i.status == "finished") fin.push_back(&i);
  std::sort(fin.begin(), fin.end(), [](const Individual* a, const Individual* b) {
    if (a->best_val_mse != b->best_val_mse)
      return a->best_val_mse < b->best_val_mse;
    return a->id < b->id;
  });
  if (fin.empty()) return fin;
  std::size_t keep = (fin.size() + 1) / 2;
  fin.resize(keep);
  return fin;
}

inline const Individual* select_parent(const std::vector<const Individual*>& pool,
                                       std::mt19937_64& rng) {
  return pool[uniform_index(rng, pool.size())];
}

class SearchOrchestrator {
 public:
  SearchOrchestrator(SearchConfig cfg, DesignSpace space, Evaluator eval,
                     std::string run_dir = "")
      : cfg_(cfg), space_(space), eval_(std::move(eval)),
        run_dir_(std::move(run_dir)) {
    if (cfg_.pool_size < 1) throw ConfigError("search: pool_size must be >= 1");
    if (cfg_.max_individuals < 0 && cfg_.max_wallclock < 0)
      throw ConfigError("search: a budget is required");
    if (!(cfg_.anneal_k > 0.0 && cfg_.anneal_k < 1.0))
      throw ConfigError("search: anneal k must be in (0,1)");
  }

  // Runs (or resumes, if the run directory already holds a ledger) to
  // budget exhaustion, draining active jobs. Returns the ledger.
  Ledger run() {
    Ledger ledger;
    std::vector<int> carryover;  // dispatched but unfinished at resume
    std::string ledger_path;
    bool resume = false;
    if (!run_dir_.empty()) {
      std::filesystem::create_directories(run_dir_);
      ledger_path = run_dir_ + "/ledger.jsonl";
      if (std::filesystem::exists(ledger_path) &&
          std::filesystem::file_size(ledger_path) > 0) {
        ledger = Ledger::load(ledger_path);
        resume = true;
        for (const auto& i : ledger.individuals()) {
          next_id_ = std::max(next_id_, i.id + 1);
          if (i.status == "training" || i.status == "pending")
            carryover.push_back(i.id);
        }
      }
      ledger.attach_file(ledger_path, resume);
    }
    if (cfg_.simulated_clock)
      run_simulated(ledger, resume, carryover);
    else
      run_wallclock(ledger, resume, carryover);
    return ledger;
  }

 private:
  struct Pending {
    double finish_time;
    int id;
    TrainOutcome outcome;
    bool operator>(const Pending& o) const {
      if (finish_time != o.finish_time) return finish_time > o.finish_time;
      return id > o.id;
    }
  };

  Individual make_individual(int id, double t, Ledger& ledger) {
    Individual ind;
    ind.id = id;
    ind.seed = mix_seed(cfg_.seed, 0x7261696eULL + static_cast<std::uint64_t>(id));
    ind.dispatch_time = t;
    ind.status = "training";
    auto rng = make_rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(id)));
    Lineage op = Lineage::Random;
    if (cfg_.algo == SearchConfig::Algo::AGA && iteration_ > 0) {
      double pb = birth_probability(cfg_, iteration_);
      op = next_operator(pb, cfg_.p_mut, rng);
    }
    if (op != Lineage::Random) {
      auto pool = parent_pool(ledger);
      ledger.fitness_reads += static_cast<int>(pool.size());
      if (pool.empty()) {
        op = Lineage::Random;  // nothing finished successfully yet
      } else if (op == Lineage::Mutation) {
        const Individual* p = select_parent(pool, rng);
        ind.genome = mutate(p->genome, rng);
        ind.parents = {p->id};
      } else {
        const Individual* pa = select_parent(pool, rng);
        const Individual* pb2 = select_parent(pool, rng);
        if (pool.size() > 1) {
          while (pb2 == pa) pb2 = select_parent(pool, rng);
        }
        if (pa == pb2) {
          // Degenerate crossover with a single candidate: mutate instead.
          op = Lineage::Mutation;
          ind.genome = mutate(pa->genome, rng);
          ind.parents = {pa->id};
        } else {
          double fa = crossover_fitness_score(pa->best_val_mse,
                                              cfg_.reciprocal_fitness);
          double fb = crossover_fitness_score(pb2->best_val_mse,
                                              cfg_.reciprocal_fitness);
          ind.genome = crossover(pa->genome, pb2->genome, fa, fb, rng);
          ind.parents = {pa->id, pb2->id};
        }
      }
    }
    if (op == Lineage::Random) ind.genome = random_genome(space_, rng);
    ind.lineage = op;
    return ind;
  }

  TrainOutcome evaluate(const Individual& ind) {
    try {
      return eval_(ind);
    } catch (const SearchInterrupted&) {
      throw;
    } catch (const std::exception&) {
      TrainOutcome o;
      o.failed = true;
      return o;
    }
  }

  bool budget_allows(int dispatched, double now) const {
    if (cfg_.max_individuals >= 0 && dispatched >= cfg_.max_individuals)
      return false;
    if (cfg_.max_wallclock >= 0 && now >= cfg_.max_wallclock) return false;
    return true;
  }

  // ---- deterministic simulated clock -------------------------------------
  void run_simulated(Ledger& ledger, bool resume, const std::vector<int>& carry) {
    std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>>
        pending;
    int dispatched = 0;
    iteration_ = 0;
    double last_tick = 0.0;
    if (resume) {
      iteration_ = ledger.last_iteration();
      last_tick = ledger.last_tick_time();
      for (const auto& i : ledger.individuals())
        if (i.status == "finished" || i.status == "failed") ++dispatched;
      dispatched += static_cast<int>(carry.size());
      for (int id : carry) {
        Individual& ind = ledger.by_id(id);
        TrainOutcome o = evaluate(ind);
        pending.push(Pending{ind.dispatch_time + duration_of(o), id, o});
      }
    } else {
      int n0 = cfg_.pool_size;
      if (cfg_.max_individuals >= 0)
        n0 = std::min(n0, cfg_.max_individuals);
      for (int i = 0; i < n0; ++i) {
        Individual ind = make_individual(next_id_++, 0.0, ledger);
        ledger.record_dispatch(ind);
        TrainOutcome o = evaluate(ind);
        pending.push(Pending{duration_of(o), ind.id, o});
        ++dispatched;
      }
    }
    int finished_since_tick = 0;
    double next_tick = last_tick + cfg_.spawn_interval;
    while (!pending.empty()) {
      // Drain finishes up to the next tick.
      while (!pending.empty() && pending.top().finish_time <= next_tick) {
        Pending p = pending.top();
        pending.pop();
        finish(ledger, p);
        ++finished_since_tick;
      }
      if (pending.empty() && !budget_allows(dispatched, next_tick)) break;
      // Spawn phase: one anneal step per tick, spawns equal finishes.
      ++iteration_;
      double pb = birth_probability(cfg_, iteration_);
      int spawn = finished_since_tick;
      if (cfg_.max_individuals >= 0)
        spawn = std::min(spawn, cfg_.max_individuals - dispatched);
      if (cfg_.max_wallclock >= 0 && next_tick >= cfg_.max_wallclock) spawn = 0;
      ledger.record_tick(next_tick, iteration_, finished_since_tick, spawn, pb);
      for (int s = 0; s < spawn; ++s) {
        Individual ind = make_individual(next_id_++, next_tick, ledger);
        ledger.record_dispatch(ind);
        TrainOutcome o = evaluate(ind);
        pending.push(Pending{next_tick + duration_of(o), ind.id, o});
        ++dispatched;
      }
      finished_since_tick = 0;
      next_tick += cfg_.spawn_interval;
    }
    // Drain any remainder past the budget.
    while (!pending.empty()) {
      Pending p = pending.top();
      pending.pop();
      finish(ledger, p);
    }
  }

  static double duration_of(const TrainOutcome& o) {
    return std::max(1, o.epochs_run);
  }

  void finish(Ledger& ledger, const Pending& p) {
    Individual ind = ledger.by_id(p.id);
    ind.status = p.outcome.failed ? "failed" : "finished";
    ind.best_val_mse = p.outcome.best_val_mse;
    ind.test_mse = p.outcome.test_mse;
    ind.epochs_run = p.outcome.epochs_run;
    ind.finish_time = p.finish_time;
    ledger.record_finish(ind);
  }

  // ---- wall clock with a worker pool -------------------------------------
  void run_wallclock(Ledger& ledger, bool resume, const std::vector<int>& carry) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    auto now_s = [&] {
      return std::chrono::duration<double>(clock::now() - t0).count();
    };

    std::mutex mu;
    std::condition_variable cv;
    std::deque<int> jobs;
    std::deque<Pending> done;
    bool stop = false;
    int active = 0;

    auto worker = [&] {
      for (;;) {
        int id = -1;
        {
          std::unique_lock<std::mutex> lk(mu);
          cv.wait(lk, [&] { return stop || !jobs.empty(); });
          if (jobs.empty()) return;
          id = jobs.front();
          jobs.pop_front();
        }
        Individual snapshot;
        {
          std::unique_lock<std::mutex> lk(mu);
          snapshot = ledger.by_id(id);
        }
        TrainOutcome o = evaluate(snapshot);
        {
          std::unique_lock<std::mutex> lk(mu);
          done.push_back(Pending{now_s(), id, o});
        }
        cv.notify_all();
      }
    };

    std::vector<std::thread> threads;
    int nworkers = std::max(1, cfg_.workers);
    for (int i = 0; i < nworkers; ++i) threads.emplace_back(worker);

    int dispatched = 0;
    iteration_ = resume ? ledger.last_iteration() : 0;
    auto dispatch = [&](double t) {
      Individual ind = make_individual(next_id_++, t, ledger);
      ledger.record_dispatch(ind);
      jobs.push_back(ind.id);
      ++active;
      ++dispatched;
    };

    {
      std::unique_lock<std::mutex> lk(mu);
      if (resume) {
        for (const auto& i : ledger.individuals())
          if (i.status == "finished" || i.status == "failed") ++dispatched;
        dispatched += static_cast<int>(carry.size());
        for (int id : carry) {
          jobs.push_back(id);
          ++active;
        }
      } else {
        int n0 = cfg_.pool_size;
        if (cfg_.max_individuals >= 0) n0 = std::min(n0, cfg_.max_individuals);
        for (int i = 0; i < n0; ++i) dispatch(now_s());
      }
    }
    cv.notify_all();

    int finished_since_tick = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu);
      cv.wait_for(lk, std::chrono::duration<double>(cfg_.spawn_interval),
                  [&] { return false; });
      while (!done.empty()) {
        Pending p = done.front();
        done.pop_front();
        finish(ledger, p);
        --active;
        ++finished_since_tick;
      }
      double t = now_s();
      if (active == 0 && !budget_allows(dispatched, t)) break;
      ++iteration_;
      double pb = birth_probability(cfg_, iteration_);
      int spawn = finished_since_tick;
      if (cfg_.max_individuals >= 0)
        spawn = std::min(spawn, cfg_.max_individuals - dispatched);
      if (cfg_.max_wallclock >= 0 && t >= cfg_.max_wallclock) spawn = 0;
      ledger.record_tick(t, iteration_, finished_since_tick, spawn, pb);
      for (int s = 0; s < spawn; ++s) dispatch(t);
      finished_since_tick = 0;
      if (spawn > 0) cv.notify_all();
      if (active == 0 && !budget_allows(dispatched, t)) break;
    }
    {
      std::unique_lock<std::mutex> lk(mu);
      stop = true;
    }
    cv.notify_all();
    for (auto& th : threads) th.join();
  }

  SearchConfig cfg_;
  DesignSpace space_;
  Evaluator eval_;
  std::string run_dir_;
  int next_id_ = 0;
  int iteration_ = 0;
};

inline Ledger run_search(const SearchConfig& cfg, DesignSpace space,
                         const Evaluator& eval, const std::string& run_dir = "") {
  SearchOrchestrator orch(cfg, space, eval, run_dir);
  return orch.run();
}

}  // namespace neurosid
