// Command-line experiment driver: seeded optimization runs over built-in or
// external objectives, plus rank/regret reports and the fidelity-correlation
// probe.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "priorband/priorband.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto push_range = [&](const std::string& part) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(std::stoull(part));
      return;
    }
    const auto lo = std::stoull(part.substr(0, dots));
    const auto hi = std::stoull(part.substr(dots + 2));
    if (hi < lo) throw priorband::ValidationError("seed range must be ascending: " + part);
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto part = text.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!part.empty()) push_range(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (seeds.empty()) throw priorband::ValidationError("no seeds given");
  return seeds;
}

double parse_budget(std::string text) {
  if (!text.empty() && (text.back() == 'x' || text.back() == 'X')) text.pop_back();
  return std::stod(text);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace priorband;
  CLI::App app{"PriorBand: multi-fidelity hyperparameter optimization harness"};
  app.require_subcommand(1);

  // --- run -------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "execute a seeded algorithm matrix");
  std::string benchmark, objective_cmd, space_file, algos = "priorband";
  std::string prior_kind, prior_file, seeds_text = "0", budget_text = "12";
  std::string accounting = "continuation", random_policy = "geometric";
  std::string tradeoff_policy = "density-scores", mode_placement = "max";
  std::string out_dir;
  std::uint64_t prior_seed = 0;
  double prior_sigma = default_sigma, incumbent_sigma = default_sigma;
  double perturb_prob = default_perturb_prob;
  int workers = 1, eta = 3, prior_pool = 50000, good_pool = 25;
  bool trace = false;

  run->add_option("--benchmark", benchmark, "built-in objective: mfh3-good, mfh3-bad, mfh6-good, mfh6-bad");
  run->add_option("--objective-cmd", objective_cmd, "external objective command (JSON-lines protocol)");
  run->add_option("--space", space_file, "search-space JSON file (required with --objective-cmd)");
  run->add_option("--algo", algos,
                  "comma-separated algorithms: rs, rs-prior, hb, hb-prior, hb-prior50, "
                  "priorband, asha, asha-esp, async-hb, async-hb-esp");
  run->add_option("--prior-kind", prior_kind, "generated prior quality: near-optimum, good, bad");
  run->add_option("--prior", prior_file, "explicit prior file {mode, sigma}");
  run->add_option("--prior-seed", prior_seed, "seed of the prior-generation pool");
  run->add_option("--prior-sigma", prior_sigma, "prior stddev in normalized units");
  run->add_option("--prior-pool", prior_pool, "pool size for near-optimum/bad priors");
  run->add_option("--good-pool", good_pool, "pool size for good priors");
  run->add_option("--budget", budget_text, "budget cap in multiples of z_max, e.g. 12 or 12x");
  run->add_option("--workers", workers, "parallel (simulated) workers");
  run->add_option("--seeds", seeds_text, "run seeds: a..b, single value, or comma list");
  run->add_option("--eta", eta, "reduction factor");
  run->add_option("--accounting", accounting, "continuation or fresh");
  run->add_option("--random-policy", random_policy, "geometric, linear, or constant50");
  run->add_option("--tradeoff-policy", tradeoff_policy,
                  "density-scores, constant-ratio, or halving-decay");
  run->add_option("--mode-placement", mode_placement, "max, min, or none");
  run->add_option("--incumbent-sigma", incumbent_sigma, "local-search stddev");
  run->add_option("--perturb-prob", perturb_prob, "per-dimension perturbation probability");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_flag("--trace", trace, "write per-draw sampling-policy traces");

  // --- report ----------------------------------------------------------------
  auto* report = app.add_subcommand("report", "aggregate finished runs");
  std::string report_what, report_in, report_out;
  report->add_option("what", report_what, "ranks or regret")->required();
  report->add_option("--in", report_in, "directory produced by run")->required();
  report->add_option("--out", report_out, "output CSV path")->required();

  // --- probe-correlation -------------------------------------------------------
  auto* probe = app.add_subcommand("probe-correlation",
                                   "rank correlation of each rung against the top fidelity");
  std::string probe_benchmark;
  int probe_samples = 25, probe_repeats = 1, probe_eta = 3;
  std::uint64_t probe_seed = 1;
  probe->add_option("--benchmark", probe_benchmark, "built-in objective name")->required();
  probe->add_option("--samples", probe_samples, "configurations per probe");
  probe->add_option("--repeats", probe_repeats, "number of probes to average");
  probe->add_option("--eta", probe_eta, "reduction factor for the rung ladder");
  probe->add_option("--seed", probe_seed, "probe seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentSpec spec;
      spec.benchmark = benchmark;
      spec.objective_cmd = objective_cmd;
      spec.space_file = space_file;
      for (std::size_t start = 0; start <= algos.size();) {
        const auto comma = algos.find(',', start);
        const auto part =
            algos.substr(start, comma == std::string::npos ? comma : comma - start);
        if (!part.empty()) spec.algorithms.push_back(algorithm_from_name(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      spec.esp.eta = eta;
      if (random_policy == "geometric") spec.esp.random_policy = RandomPolicy::Geometric;
      else if (random_policy == "linear") spec.esp.random_policy = RandomPolicy::Linear;
      else if (random_policy == "constant50") spec.esp.random_policy = RandomPolicy::Constant50;
      else throw ValidationError("unknown random policy: " + random_policy);
      if (tradeoff_policy == "density-scores")
        spec.esp.tradeoff_policy = TradeoffPolicy::DensityScores;
      else if (tradeoff_policy == "constant-ratio")
        spec.esp.tradeoff_policy = TradeoffPolicy::ConstantRatio;
      else if (tradeoff_policy == "halving-decay")
        spec.esp.tradeoff_policy = TradeoffPolicy::HalvingDecay;
      else throw ValidationError("unknown trade-off policy: " + tradeoff_policy);
      if (mode_placement == "max") spec.esp.mode_placement = ModePlacement::ModeAtMax;
      else if (mode_placement == "min") spec.esp.mode_placement = ModePlacement::ModeAtMin;
      else if (mode_placement == "none") spec.esp.mode_placement = ModePlacement::NoMode;
      else throw ValidationError("unknown mode placement: " + mode_placement);

      spec.incumbent_sigma = incumbent_sigma;
      spec.perturb_prob = perturb_prob;
      if (!prior_kind.empty()) spec.prior_kind = prior_kind_from_name(prior_kind);
      spec.prior_seed = prior_seed;
      spec.prior_file = prior_file;
      spec.prior_sigma = prior_sigma;
      spec.prior_gen.pool_size = prior_pool;
      spec.prior_gen.good_pool_size = good_pool;
      spec.workers = workers;
      spec.budget = parse_budget(budget_text);
      spec.accounting = accounting_from_name(accounting);
      spec.seeds = parse_seeds(seeds_text);
      spec.out_dir = out_dir;
      spec.trace = trace;

      const auto records = run_matrix(spec);
      int failed = 0;
      for (const auto& r : records) {
        if (r.failed) {
          ++failed;
          std::cerr << "FAILED " << r.algorithm << " seed " << r.seed << ": " << r.error << "\n";
        }
      }
      std::cout << records.size() - failed << "/" << records.size() << " runs completed, output in "
                << out_dir << "\n";
      return failed == 0 ? 0 : 1;
    }

    if (*report) {
      if (report_what == "ranks") report_ranks_csv(report_in, report_out);
      else if (report_what == "regret") report_regret_csv(report_in, report_out);
      else throw ValidationError("report expects 'ranks' or 'regret'");
      std::cout << "wrote " << report_out << "\n";
      return 0;
    }

    if (*probe) {
      auto objective = make_benchmark(probe_benchmark);
      const auto& fid = objective->space().fidelity();
      const RungLadder ladder = sh_geometry(fid.lower, fid.upper, probe_eta);
      std::vector<std::vector<double>> rho(static_cast<std::size_t>(ladder.s_max) + 1);
      int near10 = 0;
      bool high = false;
      for (int rep = 0; rep < probe_repeats; ++rep) {
        Rng rng = make_rng(probe_seed + static_cast<std::uint64_t>(rep), RngStream::Probe);
        const auto p = correlation_probe(*objective, ladder, probe_samples, rng);
        near10 = p.rung_near_10pct;
        high = p.high_correlation;
        for (int r = 0; r <= ladder.s_max; ++r)
          if (p.rho[static_cast<std::size_t>(r)])
            rho[static_cast<std::size_t>(r)].push_back(*p.rho[static_cast<std::size_t>(r)]);
      }
      std::cout << "rung,fidelity,mean_spearman_rho,n\n";
      for (int r = 0; r <= ladder.s_max; ++r) {
        const auto& v = rho[static_cast<std::size_t>(r)];
        std::cout << r << ',' << ladder.fidelity_at(r) << ','
                  << (v.empty() ? "nan" : fmt_double(mean(v))) << ',' << v.size() << "\n";
      }
      std::cout << "classification (rung " << near10 << " nearest 10% of z_max): "
                << (probe_repeats == 1
                        ? (high ? "high" : "low")
                        : (!rho[static_cast<std::size_t>(near10)].empty() &&
                                   mean(rho[static_cast<std::size_t>(near10)]) >= 0.8
                               ? "high"
                               : "low"))
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
