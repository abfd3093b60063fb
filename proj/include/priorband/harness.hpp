#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "priorband/bench.hpp"
#include "priorband/simulator.hpp"
#include "priorband/stats.hpp"

namespace priorband {

// Shortest round-trip decimal form; keeps logs byte-stable across runs.
inline std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct ExperimentSpec {
  std::string benchmark;      // built-in name, or empty when objective_cmd is set
  std::string objective_cmd;  // external objective command (needs space_file)
  std::string space_file;
  std::vector<Algorithm> algorithms;
  EspConfig esp;
  double incumbent_sigma = default_sigma;
  double perturb_prob = default_perturb_prob;

  std::optional<PriorKind> prior_kind;
  std::uint64_t prior_seed = 0;
  std::string prior_file;  // explicit prior mode; overrides prior_kind
  double prior_sigma = default_sigma;
  PriorGenOptions prior_gen;

  int workers = 1;
  double budget = 12.0;  // multiples of z_max
  Accounting accounting = Accounting::Continuation;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  bool trace = false;
};

struct CheckpointRecord {
  double budget = 0.0;  // in z_max units
  double incumbent_loss = 0.0;
  double incumbent_at_zmax = 0.0;
};

struct RunRecord {
  std::string algorithm;
  std::string benchmark;
  std::string prior_label;
  std::uint64_t seed = 0;
  std::vector<CheckpointRecord> checkpoints;
  bool failed = false;
  std::string error;
};

inline constexpr int checkpoints_per_zmax = 10;  // grid step: 0.1 z_max

// --- Checkpointing ------------------------------------------------------------

// Walk the completion-ordered history and snapshot the incumbent every
// 0.1*z_max of consumed budget. The ranking metric re-queries the incumbent
// configuration at z_max (noise-free there); the re-query is metadata only
// and is never billed.
inline std::vector<CheckpointRecord> checkpoint_run(const SimulationResult& result,
                                                    Objective& objective, double budget) {
  const auto z_max = static_cast<double>(result.ladder.z_max);
  const int total = static_cast<int>(std::round(budget * checkpoints_per_zmax));
  const auto grid_budget = [](int k) { return static_cast<double>(k) / checkpoints_per_zmax; };
  std::vector<CheckpointRecord> records;
  records.reserve(static_cast<std::size_t>(total));

  std::map<std::int64_t, double> zmax_cache;
  const auto at_zmax = [&](const Observation& obs) {
    auto it = zmax_cache.find(obs.config_id);
    if (it != zmax_cache.end()) return it->second;
    double value;
    if (obs.fidelity == result.ladder.z_max) {
      value = obs.loss;
    } else {
      Rng rng = make_rng(0);  // unused: the top fidelity is deterministic
      value = objective.evaluate(obs.config, result.ladder.z_max, rng);
    }
    zmax_cache[obs.config_id] = value;
    return value;
  };

  const double inf = std::numeric_limits<double>::infinity();
  const Observation* best = nullptr;
  double consumed = 0.0;
  int next_k = 1;
  for (const auto& obs : result.history) {
    consumed += obs.charged;
    if (!obs.failed() && (!best || better_observation(obs, *best))) best = &obs;
    while (next_k <= total && consumed >= grid_budget(next_k) * z_max) {
      records.push_back(
          {grid_budget(next_k), best ? best->loss : inf, best ? at_zmax(*best) : inf});
      ++next_k;
    }
  }
  // runs that stop short of the cap carry their final incumbent forward so
  // every run shares the same checkpoint grid
  while (next_k <= total) {
    records.push_back(
        {grid_budget(next_k), best ? best->loss : inf, best ? at_zmax(*best) : inf});
    ++next_k;
  }
  return records;
}

// --- Evaluation metrics --------------------------------------------------------

// Normalized regret per run and checkpoint: gap to the best score any run
// reached, scaled by the spread at the 1x-budget checkpoint.
inline std::vector<std::vector<double>> normalized_regret(
    const std::vector<const RunRecord*>& runs) {
  std::size_t one_x = 0;
  if (!runs.empty() && !runs.front()->checkpoints.empty()) {
    const auto& cps = runs.front()->checkpoints;
    for (std::size_t i = 0; i < cps.size(); ++i)
      if (cps[i].budget >= 1.0 - 1e-12) {
        one_x = i;
        break;
      }
  }
  double y_best = std::numeric_limits<double>::infinity();
  double y_ref = -std::numeric_limits<double>::infinity();
  for (const RunRecord* r : runs) {
    for (const auto& cp : r->checkpoints) y_best = std::min(y_best, cp.incumbent_at_zmax);
    if (one_x < r->checkpoints.size())
      y_ref = std::max(y_ref, r->checkpoints[one_x].incumbent_at_zmax);
  }
  const double span = y_ref - y_best;

  std::vector<std::vector<double>> regret(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const auto& cp : runs[i]->checkpoints) {
      const double r = span > 0 ? std::max(0.0, (cp.incumbent_at_zmax - y_best) / span) : 0.0;
      regret[i].push_back(r);
    }
  }
  return regret;
}

struct RankPoint {
  double budget = 0.0;
  double mean_rank = 0.0;
  double std_error = 0.0;
  int n_seeds = 0;
};

// Mean relative rank (with standard error over seeds) per algorithm. Ranks
// are computed within each (seed, benchmark) group by the incumbent-at-z_max
// loss, averaged over benchmarks, and reported from the 1x checkpoint on.
inline std::map<std::string, std::vector<RankPoint>> relative_ranks(
    const std::vector<const RunRecord*>& runs, double from_budget = 1.0) {
  std::map<std::string, std::vector<RankPoint>> out;
  if (runs.empty()) return out;
  const std::size_t n_cp = runs.front()->checkpoints.size();

  // (seed, benchmark) -> member runs
  std::map<std::pair<std::uint64_t, std::string>, std::vector<const RunRecord*>> groups;
  std::vector<std::string> algos;
  std::vector<std::uint64_t> seeds;
  for (const RunRecord* r : runs) {
    groups[{r->seed, r->benchmark}].push_back(r);
    if (std::find(algos.begin(), algos.end(), r->algorithm) == algos.end())
      algos.push_back(r->algorithm);
    if (std::find(seeds.begin(), seeds.end(), r->seed) == seeds.end()) seeds.push_back(r->seed);
  }

  for (std::size_t cp = 0; cp < n_cp; ++cp) {
    const double budget = runs.front()->checkpoints[cp].budget;
    if (budget < from_budget - 1e-12) continue;

    // per (algo, seed): ranks averaged over benchmarks
    std::map<std::string, std::map<std::uint64_t, std::pair<double, int>>> acc;
    for (const auto& [key, members] : groups) {
      std::vector<double> losses;
      for (const RunRecord* r : members) losses.push_back(r->checkpoints[cp].incumbent_at_zmax);
      const auto ranks = fractional_ranks(losses);
      for (std::size_t i = 0; i < members.size(); ++i) {
        auto& cell = acc[members[i]->algorithm][key.first];
        cell.first += ranks[i];
        cell.second += 1;
      }
    }
    for (const auto& algo : algos) {
      std::vector<double> per_seed;
      for (const auto seed : seeds) {
        const auto it = acc[algo].find(seed);
        if (it != acc[algo].end())
          per_seed.push_back(it->second.first / static_cast<double>(it->second.second));
      }
      out[algo].push_back(
          {budget, mean(per_seed), standard_error(per_seed), static_cast<int>(per_seed.size())});
    }
  }
  return out;
}

// --- Output emission -----------------------------------------------------------

inline void write_history_csv(const std::filesystem::path& path, const History& history) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "event_index,virtual_time,worker_id,bracket_id,rung,fidelity,config_id,loss,"
         "charged_epochs,cumulative_budget,incumbent_loss\n";
  double cumulative = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& o = history[i];
    cumulative += o.charged;
    if (!o.failed()) best = std::min(best, o.loss);
    out << i << ',' << fmt_double(o.end_time) << ',' << o.worker_id << ',' << o.bracket_id << ','
        << o.rung << ',' << o.fidelity << ',' << o.config_id << ',' << fmt_double(o.loss) << ','
        << fmt_double(o.charged) << ',' << fmt_double(cumulative) << ',' << fmt_double(best)
        << '\n';
  }
}

inline void write_trace_jsonl(const std::filesystem::path& path, const SamplerTrace& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& t : trace) {
    nlohmann::ordered_json j;
    j["i"] = t.index;
    j["rung"] = t.rung;
    j["p_u"] = t.p_uniform;
    j["p_pi"] = t.p_prior;
    j["p_inc"] = t.p_incumbent;
    j["strategy"] = strategy_name(t.strategy);
    j["config_id"] = t.config_id;
    out << j.dump() << '\n';
  }
}

inline void write_incumbent_csv(const std::filesystem::path& path,
                                const std::vector<CheckpointRecord>& cps) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "budget,incumbent_loss,incumbent_at_zmax_loss\n";
  for (const auto& cp : cps)
    out << fmt_double(cp.budget) << ',' << fmt_double(cp.incumbent_loss) << ','
        << fmt_double(cp.incumbent_at_zmax) << '\n';
}

inline void write_prior_json(const std::filesystem::path& path, const SearchSpace& space,
                             const PriorDistribution& prior) {
  nlohmann::ordered_json j;
  j["mode"] = config_to_json(space, prior.mode());
  j["sigma"] = prior.sigma();
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline PriorDistribution load_prior_json(const std::filesystem::path& path,
                                         const SearchSpace& space) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open prior file: " + path.string());
  nlohmann::json j;
  in >> j;
  return PriorDistribution(space, config_from_json(space, j.at("mode")),
                           j.value("sigma", default_sigma));
}

// --- Experiment driver ----------------------------------------------------------

namespace detail {

inline std::unique_ptr<Objective> make_objective(const ExperimentSpec& spec) {
  if (!spec.benchmark.empty()) return make_benchmark(spec.benchmark);
  if (spec.objective_cmd.empty())
    throw ValidationError("either a benchmark name or an objective command is required");
  if (spec.space_file.empty())
    throw ValidationError("--objective-cmd requires a search-space file");
  return std::make_unique<SubprocessObjective>(load_search_space(spec.space_file),
                                               spec.objective_cmd);
}

inline std::string prior_label(const ExperimentSpec& spec) {
  if (!spec.prior_file.empty()) return "file";
  if (spec.prior_kind) return prior_kind_name(*spec.prior_kind);
  return "none";
}

}  // namespace detail

// Runs the seeds x algorithms matrix of one spec, writes the per-cell output
// tree (history, incumbent curve, optional trace, prior, metadata) plus a
// matrix-level summary.csv, and returns the in-memory records.
inline std::vector<RunRecord> run_matrix(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  if (spec.seeds.empty()) throw ValidationError("at least one seed is required");
  if (spec.algorithms.empty()) throw ValidationError("at least one algorithm is required");

  const std::string bench_label = spec.benchmark.empty() ? "external" : spec.benchmark;
  const std::string prior_label = detail::prior_label(spec);
  std::vector<RunRecord> records;

  for (const Algorithm algo : spec.algorithms) {
    for (const std::uint64_t seed : spec.seeds) {
      RunRecord rec;
      rec.algorithm = algorithm_name(algo);
      rec.benchmark = bench_label;
      rec.prior_label = prior_label;
      rec.seed = seed;

      const fs::path cell_dir = spec.out_dir / rec.algorithm / bench_label / prior_label /
                                ("seed-" + std::to_string(seed));
      try {
        fs::create_directories(cell_dir);
        auto objective = detail::make_objective(spec);

        std::optional<PriorDistribution> prior;
        if (algorithm_uses_prior(algo)) {
          if (!spec.prior_file.empty()) {
            prior = load_prior_json(spec.prior_file, objective->space());
          } else if (spec.prior_kind) {
            Configuration mode =
                generate_prior(*objective, *spec.prior_kind, spec.prior_seed, seed,
                               spec.prior_gen);
            prior = PriorDistribution(objective->space(), std::move(mode), spec.prior_sigma);
          } else {
            throw ValidationError(rec.algorithm + " needs --prior or --prior-kind");
          }
        }

        SimulationSpec sim;
        sim.optimizer.algo = algo;
        sim.optimizer.esp = spec.esp;
        sim.optimizer.incumbent_sigma = spec.incumbent_sigma;
        sim.optimizer.perturb_prob = spec.perturb_prob;
        sim.workers = spec.workers;
        sim.budget = spec.budget;
        sim.accounting = spec.accounting;
        sim.seed = seed;

        const SimulationResult result = simulate(sim, *objective, prior);
        rec.checkpoints = checkpoint_run(result, *objective, spec.budget);

        write_history_csv(cell_dir / "history.csv", result.history);
        write_incumbent_csv(cell_dir / "incumbent.csv", rec.checkpoints);
        if (spec.trace) write_trace_jsonl(cell_dir / "trace.jsonl", result.trace);
        if (prior) write_prior_json(cell_dir / "prior.json", objective->space(), *prior);

        nlohmann::ordered_json meta;
        meta["algorithm"] = rec.algorithm;
        meta["benchmark"] = bench_label;
        meta["prior"] = prior_label;
        meta["seed"] = seed;
        meta["workers"] = spec.workers;
        meta["budget"] = spec.budget;
        meta["eta"] = spec.esp.eta;
        meta["accounting"] = accounting_name(spec.accounting);
        if (!result.history.empty()) {
          if (const Observation* best = try_incumbent(result.history)) {
            meta["incumbent"] = config_to_json(objective->space(), best->config);
            meta["incumbent_loss"] = best->loss;
            meta["incumbent_fidelity"] = best->fidelity;
          }
        }
        std::ofstream meta_out(cell_dir / "meta.json");
        meta_out << meta.dump(2) << '\n';
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
        std::error_code ec;
        fs::create_directories(cell_dir, ec);
        std::ofstream err(cell_dir / "error.txt");
        err << e.what() << '\n';
      }
      records.push_back(std::move(rec));
    }
  }

  // matrix summary: per-checkpoint rank within each seed plus normalized regret
  std::vector<const RunRecord*> ok;
  for (const auto& r : records)
    if (!r.failed) ok.push_back(&r);
  if (!ok.empty()) {
    const auto regret = normalized_regret(ok);
    std::ofstream out(spec.out_dir / "summary.csv");
    out << "algorithm,benchmark,prior,seed,budget,rank,regret\n";
    const std::size_t n_cp = ok.front()->checkpoints.size();
    for (std::size_t cp = 0; cp < n_cp; ++cp) {
      // rank the algorithms within each seed at this checkpoint
      std::map<std::uint64_t, std::vector<std::size_t>> by_seed;
      for (std::size_t i = 0; i < ok.size(); ++i) by_seed[ok[i]->seed].push_back(i);
      std::map<std::size_t, double> rank_of;
      for (const auto& [seed, members] : by_seed) {
        std::vector<double> losses;
        for (const auto i : members) losses.push_back(ok[i]->checkpoints[cp].incumbent_at_zmax);
        const auto ranks = fractional_ranks(losses);
        for (std::size_t m = 0; m < members.size(); ++m) rank_of[members[m]] = ranks[m];
      }
      for (std::size_t i = 0; i < ok.size(); ++i) {
        const auto& r = *ok[i];
        out << r.algorithm << ',' << r.benchmark << ',' << r.prior_label << ',' << r.seed << ','
            << fmt_double(r.checkpoints[cp].budget) << ',' << fmt_double(rank_of[i]) << ','
            << fmt_double(regret[i][cp]) << '\n';
      }
    }
  }
  return records;
}

// --- Loading results back for reports -------------------------------------------

inline std::vector<RunRecord> load_run_records(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> metas;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() == "meta.json")
      metas.push_back(entry.path());
  std::sort(metas.begin(), metas.end());

  std::vector<RunRecord> records;
  for (const auto& meta_path : metas) {
    std::ifstream in(meta_path);
    nlohmann::json meta;
    in >> meta;
    RunRecord rec;
    rec.algorithm = meta.at("algorithm").get<std::string>();
    rec.benchmark = meta.at("benchmark").get<std::string>();
    rec.prior_label = meta.at("prior").get<std::string>();
    rec.seed = meta.at("seed").get<std::uint64_t>();

    std::ifstream csv(meta_path.parent_path() / "incumbent.csv");
    if (!csv) continue;
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
      std::istringstream row(line);
      std::string field;
      CheckpointRecord cp;
      std::getline(row, field, ',');
      cp.budget = std::stod(field);
      std::getline(row, field, ',');
      cp.incumbent_loss = std::stod(field);
      std::getline(row, field, ',');
      cp.incumbent_at_zmax = std::stod(field);
      rec.checkpoints.push_back(cp);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline void report_ranks_csv(const std::filesystem::path& in_dir,
                             const std::filesystem::path& out_csv) {
  const auto records = load_run_records(in_dir);
  std::map<std::string, std::vector<const RunRecord*>> by_prior;
  for (const auto& r : records) by_prior[r.prior_label].push_back(&r);

  std::ofstream out(out_csv);
  if (!out) throw ValidationError("cannot write " + out_csv.string());
  out << "algorithm,prior,budget,mean_rank,std_error,n_seeds\n";
  for (const auto& [prior, runs] : by_prior) {
    // incomplete matrices still rank; absent cells just shrink the seed pool
    std::set<std::string> algos, benches;
    std::set<std::uint64_t> seeds;
    for (const RunRecord* r : runs) {
      algos.insert(r->algorithm);
      benches.insert(r->benchmark);
      seeds.insert(r->seed);
    }
    const std::size_t expected = algos.size() * benches.size() * seeds.size();
    if (runs.size() < expected)
      std::cerr << "warning: prior '" << prior << "' has " << runs.size() << " of " << expected
                << " matrix cells; missing runs are excluded from the ranks\n";

    const auto series = relative_ranks(runs);
    for (const auto& [algo, points] : series)
      for (const auto& p : points)
        out << algo << ',' << prior << ',' << fmt_double(p.budget) << ','
            << fmt_double(p.mean_rank) << ',' << fmt_double(p.std_error) << ',' << p.n_seeds
            << '\n';
  }
}

inline void report_regret_csv(const std::filesystem::path& in_dir,
                              const std::filesystem::path& out_csv) {
  const auto records = load_run_records(in_dir);
  // regret is normalized within a benchmark (and prior setting)
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) groups[{r.benchmark, r.prior_label}].push_back(&r);

  std::ofstream out(out_csv);
  if (!out) throw ValidationError("cannot write " + out_csv.string());
  out << "algorithm,benchmark,prior,seed,budget,regret\n";
  for (const auto& [key, runs] : groups) {
    const auto regret = normalized_regret(runs);
    for (std::size_t i = 0; i < runs.size(); ++i)
      for (std::size_t cp = 0; cp < runs[i]->checkpoints.size(); ++cp)
        out << runs[i]->algorithm << ',' << key.first << ',' << key.second << ','
            << runs[i]->seed << ',' << fmt_double(runs[i]->checkpoints[cp].budget) << ','
            << fmt_double(regret[i][cp]) << '\n';
  }
}

}  // namespace priorband
