#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "neurosid/report.hpp"

using namespace neurosid;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void set_gene(Genome& g, const std::string& name, const std::string& value) {
  const auto& table = gene_table(g.space);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].name != name) continue;
    auto it = std::find(table[i].values.begin(), table[i].values.end(), value);
    REQUIRE(it != table[i].values.end());
    g.idx[i] = static_cast<int>(it - table[i].values.begin());
    return;
  }
  FAIL("unknown gene " + name);
}

// Ledger with one finished entry per (mse, status) pair, ids in order.
Ledger synthetic_ledger(const std::vector<std::pair<double, std::string>>& rows,
                        DesignSpace space = DesignSpace::Standard) {
  Ledger led;
  auto rng = make_rng(7);
  double t = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Individual ind;
    ind.id = static_cast<int>(i);
    ind.genome = random_genome(space, rng);
    ind.dispatch_time = t;
    led.record_dispatch(ind);
    ind.status = rows[i].second;
    ind.best_val_mse = rows[i].first;
    ind.test_mse = rows[i].first;
    ind.finish_time = t += 1.0;
    led.record_finish(ind);
  }
  return led;
}

}  // namespace

TEST_CASE("progress rows track the best-so-far envelope", "[report]") {
  Ledger led = synthetic_ledger({{0.5, "finished"},
                                 {0.2, "finished"},
                                 {0.9, "failed"},
                                 {0.3, "finished"},
                                 {0.1, "finished"}});
  auto rows = progress_rows(led);
  REQUIRE(rows.size() == 4);  // failures carry no progress point
  CHECK(rows[0].best_so_far == 0.5);
  CHECK(rows[1].best_so_far == 0.2);
  CHECK(rows[2].best_so_far == 0.2);  // 0.3 does not improve
  CHECK(rows[3].best_so_far == 0.1);
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].best_so_far <= rows[i - 1].best_so_far);
}

TEST_CASE("deviations are centered log test losses", "[report]") {
  SECTION("two decades apart center at +/- 1") {
    Ledger led = synthetic_ledger({{1e-2, "finished"}, {1e-4, "finished"}});
    auto rows = deviation_rows(led);
    REQUIRE(rows.size() == 2);
    CHECK_THAT(rows[0].deviation, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(rows[1].deviation, Catch::Matchers::WithinAbs(-1.0, 1e-12));
  }
  SECTION("mean deviation is zero") {
    Ledger led = synthetic_ledger({{3e-3, "finished"},
                                   {7e-2, "finished"},
                                   {4e-4, "finished"},
                                   {9e-1, "finished"}});
    auto rows = deviation_rows(led);
    double mean = 0.0;
    for (const auto& r : rows) mean += r.deviation;
    CHECK_THAT(mean / rows.size(), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("failures and non-finite losses are excluded") {
    Ledger led = synthetic_ledger(
        {{1e-2, "finished"},
         {1e-3, "failed"},
         {std::numeric_limits<double>::infinity(), "finished"}});
    CHECK(deviation_rows(led).size() == 1);
  }
  SECTION("grouping keys read the right genes per design space") {
    Ledger sl = synthetic_ledger({{1e-2, "finished"}});
    const Genome& sg = sl.individuals().front().genome;
    CHECK(genome_type_key(sg) == sg.value("ssm_type"));
    CHECK(genome_map_key(sg) == sg.value("map"));
    Ledger xl = synthetic_ledger({{1e-2, "finished"}}, DesignSpace::XL);
    const Genome& xg = xl.individuals().front().genome;
    CHECK(genome_type_key(xg) == xg.value("model_class"));
    CHECK(genome_map_key(xg) == xg.value("f_x.map"));
  }
}

TEST_CASE("best individual selection", "[report]") {
  Ledger led = synthetic_ledger({{0.4, "finished"},
                                 {0.1, "failed"},
                                 {0.2, "finished"},
                                 {0.2, "finished"}});
  const Individual& best = best_individual(led);
  CHECK(best.id == 2);  // lowest finished MSE, earlier id on the tie

  Ledger empty = synthetic_ledger({{0.1, "failed"}});
  CHECK_THROWS_AS(best_individual(empty), ContractError);
}

TEST_CASE("trace rebuild from genome and checkpoint matches the ledger",
          "[report]") {
  // A small, concrete candidate: linear type, shortest horizon.
  auto rng = make_rng(13);
  Genome g = random_genome(DesignSpace::Standard, rng);
  set_gene(g, "ssm_type", "linear");
  set_gene(g, "N", "4");

  // Synthetic normalized test data.
  Trajectory test;
  test.u_names = {"u_0", "u_1"};
  test.y_names = {"y_0", "y_1"};
  for (int k = 0; k < 40; ++k) {
    test.U.push_back({0.5 + 0.3 * std::sin(0.2 * k), 0.5});
    test.Y.push_back({0.5 + 0.2 * std::cos(0.2 * k),
                      0.4 + 0.1 * std::sin(0.1 * k)});
  }

  std::uint64_t seed = 21;
  DecodedModel dm = decode(g, 2, 2);
  SSMInstance model(dm.spec, seed);
  double direct_mse = model.open_loop_eval(test.U, test.Y);

  SECTION("open_loop_trace agrees with open_loop_eval") {
    OpenLoopTrace trace = open_loop_trace(model, test);
    CHECK_THAT(trace.mse, Catch::Matchers::WithinRel(direct_mse, 1e-12));
    CHECK(trace.steps.size() == test.Y.size() - dm.spec.past_window);
    CHECK(trace.steps.front() == dm.spec.past_window);
  }

  SECTION("write_best_trace_csv round trip") {
    std::string wpath = temp_path("neurosid_best_weights.json");
    {
      std::ofstream wf(wpath);
      wf << model.store().checkpoint().dump();
    }
    Ledger led;
    Individual ind;
    ind.id = 0;
    ind.genome = g;
    ind.seed = seed;
    led.record_dispatch(ind);
    ind.status = "finished";
    ind.best_val_mse = direct_mse;
    ind.test_mse = direct_mse;
    led.record_finish(ind);

    std::string tpath = temp_path("neurosid_best_trace.csv");
    double rebuilt_mse = write_best_trace_csv(led, test, wpath, tpath);
    CHECK(std::fabs(rebuilt_mse - ind.test_mse) < 1e-9);

    std::ifstream tf(tpath);
    std::string header;
    std::getline(tf, header);
    CHECK(header == "step,y_0,yhat_0,y_1,yhat_1");
    std::size_t data_lines = 0;
    for (std::string line; std::getline(tf, line);)
      if (!line.empty()) ++data_lines;
    CHECK(data_lines == test.Y.size() - dm.spec.past_window);
    std::remove(wpath.c_str());
    std::remove(tpath.c_str());
  }
}

TEST_CASE("report csv writers emit the documented headers", "[report]") {
  Ledger led = synthetic_ledger({{1e-2, "finished"}, {1e-4, "finished"}});
  std::string ppath = temp_path("neurosid_progress.csv");
  std::string dpath = temp_path("neurosid_deviations.csv");
  write_progress_csv(led, ppath);
  write_deviations_csv(led, dpath);
  std::ifstream pf(ppath), df(dpath);
  std::string ph, dh;
  std::getline(pf, ph);
  std::getline(df, dh);
  CHECK(ph == "t,id,val_mse,best_val_mse");
  CHECK(dh == "id,ssm_type,linear_map,test_mse,deviation");
  std::remove(ppath.c_str());
  std::remove(dpath.c_str());
}
