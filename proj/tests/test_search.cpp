#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "neurosid/search.hpp"

using namespace neurosid;

namespace {

std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

// Deterministic stand-in for training: outcome depends only on the genome,
// so identical genomes always score identically regardless of schedule.
TrainOutcome scripted_outcome(const Individual& ind) {
  long s = std::accumulate(ind.genome.idx.begin(), ind.genome.idx.end(), 0L);
  TrainOutcome o;
  o.best_val_mse = 1e-4 * (1.0 + (s % 17));
  o.test_mse = 2.0 * o.best_val_mse;
  o.epochs_run = 1 + static_cast<int>(s % 5);
  o.failed = (s % 11 == 0);
  return o;
}

SearchConfig base_cfg(int pool, int budget) {
  SearchConfig cfg;
  cfg.pool_size = pool;
  cfg.max_individuals = budget;
  cfg.spawn_interval = 2.0;
  cfg.simulated_clock = true;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("birth probability anneals geometrically", "[search]") {
  SearchConfig cfg;
  cfg.p_birth0 = 1.0;
  cfg.anneal_k = 0.5;
  CHECK(birth_probability(cfg, 0) == 1.0);
  CHECK(birth_probability(cfg, 1) == 0.5);
  CHECK(birth_probability(cfg, 2) == 0.25);
  CHECK(birth_probability(cfg, 3) == 0.125);
}

TEST_CASE("operator draw frequencies", "[search]") {
  auto rng = make_rng(5);
  SECTION("p_birth zero splits mutation/crossover at p_mut") {
    int mut = 0, cross = 0;
    for (int i = 0; i < 10000; ++i) {
      Lineage l = next_operator(0.0, 0.2, rng);
      if (l == Lineage::Mutation) ++mut;
      if (l == Lineage::Crossover) ++cross;
      REQUIRE(l != Lineage::Random);
    }
    CHECK_THAT(mut / 10000.0, Catch::Matchers::WithinAbs(0.2, 0.02));
    CHECK_THAT(cross / 10000.0, Catch::Matchers::WithinAbs(0.8, 0.02));
  }
  SECTION("p_birth one is always random") {
    for (int i = 0; i < 100; ++i)
      CHECK(next_operator(1.0, 0.2, rng) == Lineage::Random);
  }
}

TEST_CASE("parent pool ranks by validation mse, top half", "[search]") {
  Ledger led;
  const double mses[] = {1e-1, 1e-3, 1.0, 1e-2};
  auto rng = make_rng(1);
  for (int id = 0; id < 4; ++id) {
    Individual ind;
    ind.id = id;
    ind.genome = random_genome(DesignSpace::Standard, rng);
    led.record_dispatch(ind);
    ind.status = "finished";
    ind.best_val_mse = mses[id];
    led.record_finish(ind);
  }
  auto pool = parent_pool(led);
  REQUIRE(pool.size() == 2);  // ceil(4 / 2)
  CHECK(pool[0]->id == 1);    // 1e-3
  CHECK(pool[1]->id == 3);    // 1e-2

  SECTION("failed individuals never become parents") {
    Individual f;
    f.id = 4;
    f.genome = random_genome(DesignSpace::Standard, rng);
    led.record_dispatch(f);
    f.status = "failed";
    f.best_val_mse = 0.0;  // would rank first if eligible
    led.record_finish(f);
    for (const Individual* p : parent_pool(led)) CHECK(p->id != 4);
  }
  SECTION("ties broken by earlier id") {
    Individual t;
    t.id = 5;
    t.genome = random_genome(DesignSpace::Standard, rng);
    led.record_dispatch(t);
    t.status = "finished";
    t.best_val_mse = 1e-3;  // ties individual 1
    led.record_finish(t);
    auto p2 = parent_pool(led);
    REQUIRE(p2.size() == 3);  // ceil(5 / 2)
    CHECK(p2[0]->id == 1);
    CHECK(p2[1]->id == 5);
  }
}

TEST_CASE("budget equal to the pool yields only random births", "[search]") {
  SearchConfig cfg = base_cfg(8, 8);
  Ledger led = run_search(cfg, DesignSpace::Standard, scripted_outcome);
  REQUIRE(led.individuals().size() == 8);
  for (const auto& i : led.individuals()) {
    CHECK(i.lineage == Lineage::Random);
    CHECK((i.status == "finished" || i.status == "failed"));
  }
}

TEST_CASE("spawn accounting and pool bound under the simulated clock",
          "[search]") {
  SearchConfig cfg = base_cfg(6, 30);
  Ledger led = run_search(cfg, DesignSpace::Standard, scripted_outcome);
  REQUIRE(led.individuals().size() == 30);

  SECTION("every tick spawns exactly the finishes, budget permitting") {
    int dispatched = cfg.pool_size;
    for (const auto& e : led.events()) {
      if (e.at("event") != "tick") continue;
      int fin = e.at("finished_since_last").get<int>();
      int spawned = e.at("spawned").get<int>();
      CHECK(spawned == std::min(fin, cfg.max_individuals - dispatched));
      dispatched += spawned;
    }
    CHECK(dispatched == cfg.max_individuals);
  }
  SECTION("tick birth probabilities follow the annealing schedule") {
    int it = 0;
    for (const auto& e : led.events()) {
      if (e.at("event") != "tick") continue;
      ++it;
      CHECK(e.at("iteration").get<int>() == it);
      CHECK(e.at("p_birth").get<double>() == birth_probability(cfg, it));
    }
  }
  SECTION("no more than pool_size individuals are ever in flight") {
    const auto& inds = led.individuals();
    for (const auto& probe : inds) {
      int active = 0;
      for (const auto& i : inds)
        if (i.dispatch_time <= probe.dispatch_time &&
            probe.dispatch_time < i.finish_time)
          ++active;
      CHECK(active <= cfg.pool_size);
    }
  }
  SECTION("later generations use the evolutionary operators") {
    bool any_evolved = false;
    for (const auto& i : led.individuals()) {
      if (i.lineage == Lineage::Random) continue;
      any_evolved = true;
      CHECK(!i.parents.empty());
      for (int pid : i.parents) {
        const Individual& p = led.by_id(pid);
        CHECK(p.status == "finished");
        CHECK(p.finish_time <= i.dispatch_time);
      }
    }
    CHECK(any_evolved);
  }
}

TEST_CASE("random search never consults fitness", "[search]") {
  SearchConfig cfg = base_cfg(6, 30);
  cfg.algo = SearchConfig::Algo::Random;
  Ledger led = run_search(cfg, DesignSpace::Standard, scripted_outcome);
  CHECK(led.fitness_reads == 0);
  for (const auto& i : led.individuals()) {
    CHECK(i.lineage == Lineage::Random);
    CHECK(i.parents.empty());
  }
}

TEST_CASE("identical seeds give byte-identical ledgers", "[search]") {
  SearchConfig cfg = base_cfg(6, 25);
  std::string d1 = temp_dir("neurosid_det1");
  std::string d2 = temp_dir("neurosid_det2");
  run_search(cfg, DesignSpace::Standard, scripted_outcome, d1);
  run_search(cfg, DesignSpace::Standard, scripted_outcome, d2);
  std::string a = slurp(d1 + "/ledger.jsonl");
  std::string b = slurp(d2 + "/ledger.jsonl");
  CHECK(!a.empty());
  CHECK(a == b);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("interrupted searches resume from the ledger", "[search]") {
  SearchConfig cfg = base_cfg(5, 20);
  cfg.algo = SearchConfig::Algo::Random;  // genome is a pure function of id
  std::string dir = temp_dir("neurosid_resume");

  int calls = 0;
  Evaluator flaky = [&](const Individual& ind) -> TrainOutcome {
    if (++calls == 8) throw SearchInterrupted{};
    return scripted_outcome(ind);
  };
  CHECK_THROWS_AS(run_search(cfg, DesignSpace::Standard, flaky, dir),
                  SearchInterrupted);

  Ledger resumed = run_search(cfg, DesignSpace::Standard, scripted_outcome, dir);
  Ledger clean = run_search(cfg, DesignSpace::Standard, scripted_outcome);

  REQUIRE(resumed.individuals().size() == 20);
  std::set<int> ids;
  for (const auto& i : resumed.individuals()) {
    CHECK(ids.insert(i.id).second);  // no duplicated ids after resume
    CHECK((i.status == "finished" || i.status == "failed"));
    const Individual& ref = clean.by_id(i.id);
    CHECK(i.genome == ref.genome);
    CHECK(i.seed == ref.seed);
    if (i.status == "finished")
      CHECK(i.best_val_mse == ref.best_val_mse);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("search config validation", "[search]") {
  Evaluator noop = [](const Individual&) { return TrainOutcome{}; };
  SearchConfig cfg;  // no budget at all
  CHECK_THROWS_AS(SearchOrchestrator(cfg, DesignSpace::Standard, noop),
                  ConfigError);
  cfg.max_individuals = 10;
  cfg.pool_size = 0;
  CHECK_THROWS_AS(SearchOrchestrator(cfg, DesignSpace::Standard, noop),
                  ConfigError);
  cfg.pool_size = 5;
  cfg.anneal_k = 1.5;
  CHECK_THROWS_AS(SearchOrchestrator(cfg, DesignSpace::Standard, noop),
                  ConfigError);
}

TEST_CASE("wall-clock mode drains to the same budget", "[search]") {
  SearchConfig cfg = base_cfg(4, 12);
  cfg.simulated_clock = false;
  cfg.spawn_interval = 0.01;
  cfg.workers = 2;
  Ledger led = run_search(cfg, DesignSpace::Standard, scripted_outcome);
  CHECK(led.individuals().size() == 12);
  std::set<int> ids;
  for (const auto& i : led.individuals()) {
    CHECK(ids.insert(i.id).second);
    CHECK((i.status == "finished" || i.status == "failed"));
  }
}
