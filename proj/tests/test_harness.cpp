#include "priorband/harness.hpp"

#include <catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

using namespace priorband;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() /
                       ("priorband-test-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunRecord synthetic_record(const std::string& algo, std::uint64_t seed,
                           const std::vector<double>& at_zmax,
                           const std::string& benchmark = "bench") {
  RunRecord r;
  r.algorithm = algo;
  r.benchmark = benchmark;
  r.prior_label = "good";
  r.seed = seed;
  for (std::size_t i = 0; i < at_zmax.size(); ++i)
    r.checkpoints.push_back({0.5 * static_cast<double>(i + 1), at_zmax[i], at_zmax[i]});
  return r;
}

ExperimentSpec small_spec(const fs::path& out) {
  ExperimentSpec spec;
  spec.benchmark = "mfh3-good";
  spec.algorithms = {Algorithm::PriorBand};
  spec.prior_kind = PriorKind::Good;
  spec.budget = 2.0;
  spec.seeds = {0};
  spec.out_dir = out;
  spec.trace = true;
  return spec;
}

}  // namespace

TEST_CASE("checkpoints walk the 0.1 z_max grid") {
  MfHartmannObjective obj(3, true);
  SimulationSpec sim;
  sim.optimizer.algo = Algorithm::Hb;
  sim.budget = 2.0;
  sim.seed = 1;
  const auto result = simulate(sim, obj);
  const auto cps = checkpoint_run(result, obj, 2.0);

  REQUIRE(cps.size() == 20);
  for (std::size_t i = 0; i < cps.size(); ++i)
    CHECK(cps[i].budget == Catch::Approx(0.1 * static_cast<double>(i + 1)));

  SECTION("incumbent curve is non-increasing") {
    for (std::size_t i = 1; i < cps.size(); ++i)
      CHECK(cps[i].incumbent_loss <= cps[i - 1].incumbent_loss);
  }

  SECTION("re-query at z_max is the noise-free value of the incumbent") {
    Rng rng = make_rng(0);
    const auto& best = incumbent(result.history);
    CHECK(cps.back().incumbent_at_zmax ==
          Catch::Approx(obj.evaluate(best.config, 100, rng)));
  }
}

TEST_CASE("normalized regret endpoints and monotonicity") {
  // two runs, two checkpoints each at budgets (0.5, 1.0)
  const auto a = synthetic_record("a", 0, {4.0, 1.0});   // reaches the best value
  const auto b = synthetic_record("b", 0, {9.0, 9.0});   // stuck at the reference
  const std::vector<const RunRecord*> runs{&a, &b};
  const auto regret = normalized_regret(runs);

  CHECK(regret[0][1] == 0.0);                      // y_best holder
  CHECK(regret[1][1] == 1.0);                      // y_ref at the 1x checkpoint
  CHECK(regret[0][0] == Catch::Approx(3.0 / 8.0));  // (4-1)/(9-1)

  SECTION("per-run regret never increases with budget") {
    const auto c = synthetic_record("c", 1, {7.0, 5.0, 5.0, 2.0});
    const auto d = synthetic_record("d", 1, {8.0, 8.0, 6.0, 6.0});
    const std::vector<const RunRecord*> rs{&c, &d};
    const auto reg = normalized_regret(rs);
    for (const auto& series : reg)
      for (std::size_t i = 1; i < series.size(); ++i) CHECK(series[i] <= series[i - 1]);
  }

  SECTION("flat landscape yields all-zero regret") {
    const auto c = synthetic_record("c", 0, {3.0, 3.0});
    const auto d = synthetic_record("d", 0, {3.0, 3.0});
    const std::vector<const RunRecord*> rs{&c, &d};
    for (const auto& series : normalized_regret(rs))
      for (const double r : series) CHECK(r == 0.0);
  }
}

TEST_CASE("relative ranks") {
  SECTION("strict winner gets rank 1 with zero standard error") {
    std::vector<RunRecord> records;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      records.push_back(synthetic_record("winner", seed, {1.0, 1.0, 1.0}));
      records.push_back(synthetic_record("loser", seed, {2.0, 2.0, 2.0}));
    }
    std::vector<const RunRecord*> runs;
    for (const auto& r : records) runs.push_back(&r);
    const auto series = relative_ranks(runs, 1.0);

    for (const auto& p : series.at("winner")) {
      CHECK(p.mean_rank == 1.0);
      CHECK(p.std_error == 0.0);
      CHECK(p.n_seeds == 5);
    }
    for (const auto& p : series.at("loser")) CHECK(p.mean_rank == 2.0);
  }

  SECTION("all tied: everyone gets (k+1)/2") {
    std::vector<RunRecord> records;
    for (const auto* algo : {"a", "b", "c"})
      for (std::uint64_t seed = 0; seed < 3; ++seed)
        records.push_back(synthetic_record(algo, seed, {5.0, 5.0}));
    std::vector<const RunRecord*> runs;
    for (const auto& r : records) runs.push_back(&r);
    const auto series = relative_ranks(runs, 0.0);
    for (const auto& [algo, points] : series)
      for (const auto& p : points) CHECK(p.mean_rank == Catch::Approx(2.0));
  }

  SECTION("rank sums are conserved at every checkpoint") {
    Rng rng = make_rng(70);
    std::vector<RunRecord> records;
    const std::vector<std::string> algos{"a", "b", "c", "d"};
    for (const auto& algo : algos)
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        std::vector<double> vals;
        for (int cp = 0; cp < 6; ++cp) vals.push_back(uniform01(rng));
        std::sort(vals.rbegin(), vals.rend());
        records.push_back(synthetic_record(algo, seed, vals));
      }
    std::vector<const RunRecord*> runs;
    for (const auto& r : records) runs.push_back(&r);
    const auto series = relative_ranks(runs, 0.0);
    const std::size_t n_points = series.at("a").size();
    for (std::size_t i = 0; i < n_points; ++i) {
      double total = 0.0;
      for (const auto& algo : algos) total += series.at(algo)[i].mean_rank;
      CHECK(total == Catch::Approx(4.0 * 5.0 / 2.0).margin(1e-9));
    }
  }

  SECTION("series start at the 1x checkpoint") {
    const auto a = synthetic_record("a", 0, {1.0, 1.0});  // budgets 0.5 and 1.0
    const std::vector<const RunRecord*> runs{&a};
    const auto series = relative_ranks(runs);
    REQUIRE(series.at("a").size() == 1);
    CHECK(series.at("a")[0].budget == 1.0);
  }
}

TEST_CASE("run_matrix output tree") {
  const auto out = fresh_dir("matrix");
  auto spec = small_spec(out);
  spec.algorithms = {Algorithm::Rs, Algorithm::Hb, Algorithm::PriorBand};
  spec.seeds = {0, 1, 2};
  const auto records = run_matrix(spec);

  SECTION("one log per cell, none failed") {
    CHECK(records.size() == 9);
    int histories = 0;
    for (const auto& entry : fs::recursive_directory_iterator(out))
      if (entry.path().filename() == "history.csv") ++histories;
    CHECK(histories == 9);
    for (const auto& r : records) CHECK_FALSE(r.failed);
  }

  SECTION("summary covers algos x seeds x checkpoints") {
    const auto summary = slurp(out / "summary.csv");
    const auto rows = std::count(summary.begin(), summary.end(), '\n');
    CHECK(rows == 1 + 9 * 20);  // header + cells * checkpoints
  }

  SECTION("prior-based cells record the shared prior") {
    const auto p0 = slurp(out / "priorband/mfh3-good/good/seed-0/prior.json");
    const auto p1 = slurp(out / "priorband/mfh3-good/good/seed-1/prior.json");
    CHECK(p0 == p1);  // good priors carry no per-seed noise
  }

  fs::remove_all(out);
}

TEST_CASE("run_matrix is deterministic down to the bytes") {
  const auto out_a = fresh_dir("det-a");
  const auto out_b = fresh_dir("det-b");
  auto spec_a = small_spec(out_a);
  auto spec_b = small_spec(out_b);
  spec_a.workers = spec_b.workers = 4;
  run_matrix(spec_a);
  run_matrix(spec_b);

  const fs::path cell = fs::path("priorband") / "mfh3-good" / "good" / "seed-0";
  CHECK(slurp(out_a / cell / "history.csv") == slurp(out_b / cell / "history.csv"));
  CHECK(slurp(out_a / cell / "trace.jsonl") == slurp(out_b / cell / "trace.jsonl"));
  CHECK(slurp(out_a / cell / "incumbent.csv") == slurp(out_b / cell / "incumbent.csv"));

  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("matrix cells fail independently") {
  const auto out = fresh_dir("failcell");
  auto spec = small_spec(out);
  spec.algorithms = {Algorithm::Rs, Algorithm::RsPrior};
  spec.prior_kind = std::nullopt;  // rs-prior cannot build its prior
  const auto records = run_matrix(spec);

  REQUIRE(records.size() == 2);
  CHECK_FALSE(records[0].failed);
  CHECK(records[1].failed);
  CHECK(fs::exists(out / "rs-prior/mfh3-good/none/seed-0/error.txt"));
  CHECK(fs::exists(out / "rs/mfh3-good/none/seed-0/history.csv"));
  fs::remove_all(out);
}

TEST_CASE("emitted files carry the documented shapes") {
  const auto out = fresh_dir("files");
  auto spec = small_spec(out);
  spec.algorithms = {Algorithm::RsPrior, Algorithm::PriorBand};
  run_matrix(spec);

  SECTION("rs-prior history opens with the mode evaluation at z_max") {
    std::ifstream csv(out / "rs-prior/mfh3-good/good/seed-0/history.csv");
    std::string header, first;
    std::getline(csv, header);
    std::getline(csv, first);
    CHECK(header ==
          "event_index,virtual_time,worker_id,bracket_id,rung,fidelity,config_id,loss,"
          "charged_epochs,cumulative_budget,incumbent_loss");
    //                    ev,t, w, bracket, rung, z, id
    CHECK(first.rfind("0,100,0,-1,3,100,0,", 0) == 0);
  }

  SECTION("incumbent curve rows increase strictly in budget") {
    std::ifstream csv(out / "priorband/mfh3-good/good/seed-0/incumbent.csv");
    std::string line;
    std::getline(csv, line);
    double prev = 0.0;
    while (std::getline(csv, line)) {
      const double budget = std::stod(line.substr(0, line.find(',')));
      CHECK(budget > prev);
      prev = budget;
    }
  }

  SECTION("trace records rung-0 draws at p_u = 0.5 before activation") {
    std::ifstream jsonl(out / "priorband/mfh3-good/good/seed-0/trace.jsonl");
    std::string line;
    bool saw_rung0 = false;
    while (std::getline(jsonl, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("p_u").get<double>() + j.at("p_pi").get<double>() +
                j.at("p_inc").get<double>() ==
            Catch::Approx(1.0).margin(1e-12));
      if (j.at("i").get<int>() < 27 && j.at("rung").get<int>() == 0) {
        saw_rung0 = true;
        CHECK(j.at("p_u").get<double>() == 0.5);
        CHECK(j.at("p_inc").get<double>() == 0.0);
      }
    }
    CHECK(saw_rung0);
  }

  fs::remove_all(out);
}

TEST_CASE("reports aggregate a finished directory") {
  const auto out = fresh_dir("report");
  auto spec = small_spec(out);
  spec.algorithms = {Algorithm::Hb, Algorithm::PriorBand};
  spec.seeds = {0, 1, 2};
  run_matrix(spec);

  const auto ranks_csv = out / "ranks.csv";
  report_ranks_csv(out, ranks_csv);
  const auto ranks = slurp(ranks_csv);
  CHECK(ranks.rfind("algorithm,prior,budget,mean_rank,std_error,n_seeds\n", 0) == 0);
  // 2 algorithms x checkpoints from 1.0x on (budget 2.0 -> 11 points each)
  CHECK(std::count(ranks.begin(), ranks.end(), '\n') == 1 + 2 * 11);

  const auto regret_csv = out / "regret.csv";
  report_regret_csv(out, regret_csv);
  const auto regret = slurp(regret_csv);
  CHECK(regret.rfind("algorithm,benchmark,prior,seed,budget,regret\n", 0) == 0);
  CHECK(std::count(regret.begin(), regret.end(), '\n') == 1 + 6 * 20);

  fs::remove_all(out);
}

TEST_CASE("a dying external objective fails only its own evaluations") {
  std::vector<ParameterDef> params{
      {.name = "x", .kind = ParamKind::Continuous, .lower = 0, .upper = 1}};
  SearchSpace space(std::move(params), FidelityDef{"z", 3, 81, true});

  // child answers twice, then exits
  const std::string cmd =
      "python3 -c 'import sys, json\n"
      "for i, line in enumerate(sys.stdin):\n"
      "    if i == 2: break\n"
      "    print(json.dumps({\"loss\": 1.0 + i}))\n"
      "    sys.stdout.flush()'";
  SubprocessObjective obj(space, cmd);

  SimulationSpec sim;
  sim.optimizer.algo = Algorithm::Rs;
  sim.budget = 5.0;
  sim.seed = 0;
  const auto result = simulate(sim, obj);  // must not bring the process down
  REQUIRE(result.history.size() == 5);
  CHECK_FALSE(result.history[0].failed());
  CHECK_FALSE(result.history[1].failed());
  for (std::size_t i = 2; i < result.history.size(); ++i)
    CHECK(result.history[i].failed());
  CHECK(incumbent(result.history).loss == 1.0);
}

TEST_CASE("ranks report tolerates missing cells") {
  const auto out = fresh_dir("missing");
  auto spec = small_spec(out);
  spec.algorithms = {Algorithm::Hb, Algorithm::PriorBand};
  spec.seeds = {0, 1};
  run_matrix(spec);
  fs::remove_all(out / "priorband/mfh3-good/good/seed-1");  // drop one cell

  const auto ranks_csv = out / "ranks.csv";
  report_ranks_csv(out, ranks_csv);
  const auto ranks = slurp(ranks_csv);
  // hb keeps both seeds, priorband only one
  CHECK(ranks.find("hb,good,1,") != std::string::npos);
  bool saw_single_seed_point = false;
  std::istringstream lines(ranks);
  std::string line;
  while (std::getline(lines, line))
    if (line.rfind("priorband,", 0) == 0 && line.substr(line.size() - 2) == ",1")
      saw_single_seed_point = true;
  CHECK(saw_single_seed_point);
  fs::remove_all(out);
}

TEST_CASE("prior file round-trip") {
  MfHartmannObjective obj(3, true);
  const auto out = fresh_dir("prior");
  Configuration mode;
  mode.values = {0.1, 0.2, 0.3};
  const PriorDistribution prior(obj.space(), mode, 0.3);
  write_prior_json(out / "prior.json", obj.space(), prior);
  const auto loaded = load_prior_json(out / "prior.json", obj.space());
  CHECK(loaded.mode() == mode);
  CHECK(loaded.sigma() == 0.3);
  fs::remove_all(out);
}
