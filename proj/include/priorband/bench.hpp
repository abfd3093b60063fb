#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include "priorband/distributions.hpp"
#include "priorband/scheduler.hpp"
#include "priorband/search_space.hpp"
#include "priorband/stats.hpp"

namespace priorband {

// Minimization objective with a cheap-proxy fidelity axis. Evaluation at the
// top fidelity must be deterministic, so the proxy coincides with the true
// objective there.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual const SearchSpace& space() const = 0;
  virtual double evaluate(const Configuration& config, std::int64_t fidelity, Rng& rng) = 0;
  virtual std::optional<Configuration> analytic_optimum() const { return std::nullopt; }
};

// Map the integer fidelity onto [0,1]; the declared log scale of the fidelity
// axis puts the rungs at even spacing in log domain.
inline double fidelity_normalize(std::int64_t z, std::int64_t z_min, std::int64_t z_max,
                                 bool log_scaled = true) {
  if (z < z_min || z > z_max) throw ValidationError("fidelity outside bounds");
  if (log_scaled)
    return (std::log(static_cast<double>(z)) - std::log(static_cast<double>(z_min))) /
           (std::log(static_cast<double>(z_max)) - std::log(static_cast<double>(z_min)));
  return static_cast<double>(z - z_min) / static_cast<double>(z_max - z_min);
}

// Multi-fidelity Hartmann (3d or 6d). The classic surface is negated so that
// lower is better and the known optima appear as minima. Lower fidelities see
// a shrunken outer coefficient (bias b) plus additive half-normal noise of
// scale c*(1-z); both vanish at the top fidelity.
struct MfhVariant {
  int dim = 3;
  double bias = 2.5;         // good: 2.5, bad: 4.0
  double noise_scale = 2.0;  // good: 2.0, bad: 5.0
  std::array<double, 4> alpha{1.0, 1.2, 3.0, 3.2};
  std::vector<std::array<double, 6>> a;  // 4 x dim
  std::vector<std::array<double, 6>> p;  // 4 x dim
};

inline MfhVariant make_mfh_variant(int dim, bool good_correlation) {
  MfhVariant v;
  v.dim = dim;
  v.bias = good_correlation ? 2.5 : 4.0;
  v.noise_scale = good_correlation ? 2.0 : 5.0;
  if (dim == 3) {
    v.a = {{{3, 10, 30}}, {{0.1, 10, 35}}, {{3, 10, 30}}, {{0.1, 10, 35}}};
    v.p = {{{0.3689, 0.1170, 0.2673}},
           {{0.4699, 0.4387, 0.7470}},
           {{0.1091, 0.8732, 0.5547}},
           {{0.0381, 0.5743, 0.8828}}};
  } else if (dim == 6) {
    v.a = {{{10, 3, 17, 3.5, 1.7, 8}},
           {{0.05, 10, 17, 0.1, 8, 14}},
           {{3, 3.5, 1.7, 10, 17, 8}},
           {{17, 8, 0.05, 10, 0.1, 14}}};
    v.p = {{{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886}},
           {{0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991}},
           {{0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650}},
           {{0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}}};
  } else {
    throw ValidationError("Hartmann variant must be 3- or 6-dimensional");
  }
  return v;
}

inline double mfh_deterministic(const MfhVariant& v, std::span<const double> x, double z) {
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double expo = 0.0;
    for (int j = 0; j < v.dim; ++j) {
      const double d = x[static_cast<std::size_t>(j)] - v.p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      expo += v.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * d * d;
    }
    sum += (v.alpha[static_cast<std::size_t>(i)] - v.bias * (1.0 - z)) * std::exp(-expo);
  }
  return -sum;
}

inline double mfh_eval(const MfhVariant& v, std::span<const double> x, std::int64_t z_int,
                       Rng& rng, std::int64_t z_min = 3, std::int64_t z_max = 100) {
  if (static_cast<int>(x.size()) != v.dim) throw ValidationError("dimension mismatch");
  for (double xi : x)
    if (!(xi >= 0.0 && xi <= 1.0)) throw ValidationError("x outside the unit cube");
  const double z = fidelity_normalize(z_int, z_min, z_max);
  double loss = mfh_deterministic(v, x, z);
  const double noise_sigma = v.noise_scale * (1.0 - z);
  if (noise_sigma > 0.0) loss += std::abs(normal(rng, 0.0, noise_sigma));
  return loss;
}

class MfHartmannObjective : public Objective {
 public:
  MfHartmannObjective(int dim, bool good_correlation)
      : variant_(make_mfh_variant(dim, good_correlation)), space_(make_space(dim)) {}

  const SearchSpace& space() const override { return space_; }
  const MfhVariant& variant() const { return variant_; }

  double evaluate(const Configuration& config, std::int64_t fidelity, Rng& rng) override {
    space_.validate(config);
    std::vector<double> x(static_cast<std::size_t>(variant_.dim));
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = std::get<double>(config.values[d]);
    return mfh_eval(variant_, x, fidelity, rng, space_.fidelity().lower, space_.fidelity().upper);
  }

  std::optional<Configuration> analytic_optimum() const override {
    Configuration c;
    if (variant_.dim == 3) {
      c.values = {0.114614, 0.555649, 0.852547};
    } else {
      c.values = {0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573};
    }
    return c;
  }

 private:
  static SearchSpace make_space(int dim) {
    std::vector<ParameterDef> params;
    for (int d = 0; d < dim; ++d) {
      ParameterDef p;
      p.name = "X_" + std::to_string(d);
      p.kind = ParamKind::Continuous;
      p.lower = 0.0;
      p.upper = 1.0;
      params.push_back(std::move(p));
    }
    return SearchSpace(std::move(params), FidelityDef{"z", 3, 100, true});
  }

  MfhVariant variant_;
  SearchSpace space_;
};

inline std::unique_ptr<Objective> make_benchmark(const std::string& name) {
  if (name == "mfh3-good") return std::make_unique<MfHartmannObjective>(3, true);
  if (name == "mfh3-bad") return std::make_unique<MfHartmannObjective>(3, false);
  if (name == "mfh6-good") return std::make_unique<MfHartmannObjective>(6, true);
  if (name == "mfh6-bad") return std::make_unique<MfHartmannObjective>(6, false);
  throw ValidationError("unknown benchmark: " + name);
}

// --- Fidelity-correlation probe ---------------------------------------------

struct CorrelationProbe {
  std::vector<std::optional<double>> rho;  // per rung, against the top fidelity
  int rung_near_10pct = 0;
  bool high_correlation = false;  // rho at the ~10% rung >= 0.8
};

// Spearman correlation between each rung's losses and the top-fidelity losses
// of the same n uniform configurations; sub-top evaluations include noise.
inline CorrelationProbe correlation_probe(Objective& objective, const RungLadder& ladder,
                                          int n, Rng& rng) {
  if (n < 3) throw std::invalid_argument("probe needs n >= 3");
  std::vector<Configuration> configs;
  for (int i = 0; i < n; ++i) configs.push_back(objective.space().sample_uniform(rng));

  std::vector<double> top(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    top[static_cast<std::size_t>(i)] =
        objective.evaluate(configs[static_cast<std::size_t>(i)], ladder.z_max, rng);

  CorrelationProbe probe;
  for (int rung = 0; rung <= ladder.s_max; ++rung) {
    std::vector<double> losses(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      losses[static_cast<std::size_t>(i)] =
          objective.evaluate(configs[static_cast<std::size_t>(i)], ladder.fidelity_at(rung), rng);
    probe.rho.push_back(spearman_rho(losses, top));
  }

  const double target = 0.1 * static_cast<double>(ladder.z_max);
  int best_rung = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int rung = 0; rung <= ladder.s_max; ++rung) {
    const double dist = std::abs(static_cast<double>(ladder.fidelity_at(rung)) - target);
    if (dist < best_dist) {
      best_dist = dist;
      best_rung = rung;
    }
  }
  probe.rung_near_10pct = best_rung;
  const auto& r = probe.rho[static_cast<std::size_t>(best_rung)];
  probe.high_correlation = r.has_value() && *r >= 0.8;
  return probe;
}

// --- External objectives -----------------------------------------------------
//
// Runs a user command as a child process and exchanges one JSON line per
// evaluation: {"config": {...}, "fidelity": z, "seed": n} in, {"loss": y} out.
class SubprocessObjective : public Objective {
 public:
  SubprocessObjective(SearchSpace space, std::string command)
      : space_(std::move(space)), command_(std::move(command)) {
    spawn();
  }

  ~SubprocessObjective() override {
    if (to_child_) std::fclose(to_child_);
    if (from_child_) std::fclose(from_child_);
    if (pid_ > 0) waitpid(pid_, nullptr, 0);
  }

  SubprocessObjective(const SubprocessObjective&) = delete;
  SubprocessObjective& operator=(const SubprocessObjective&) = delete;

  const SearchSpace& space() const override { return space_; }

  double evaluate(const Configuration& config, std::int64_t fidelity, Rng& rng) override {
    nlohmann::json req;
    req["config"] = config_to_json(space_, config, /*include_constants=*/true);
    req["fidelity"] = fidelity;
    req["seed"] = rng();
    const std::string line = req.dump();
    if (std::fprintf(to_child_, "%s\n", line.c_str()) < 0 || std::fflush(to_child_) != 0)
      throw ValidationError("objective command: write failed");

    char* buf = nullptr;
    std::size_t cap = 0;
    const ssize_t len = getline(&buf, &cap, from_child_);
    std::unique_ptr<char, decltype(&std::free)> guard(buf, &std::free);
    if (len <= 0) throw ValidationError("objective command: no response");
    const auto resp = nlohmann::json::parse(std::string(buf, static_cast<std::size_t>(len)));
    return resp.at("loss").get<double>();
  }

 private:
  void spawn() {
    // a dying child must fail this cell's evaluate(), not kill the harness
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw ValidationError("objective command: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw ValidationError("objective command: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    to_child_ = fdopen(to_child[1], "w");
    from_child_ = fdopen(from_child[0], "r");
    if (!to_child_ || !from_child_) throw ValidationError("objective command: fdopen failed");
  }

  SearchSpace space_;
  std::string command_;
  pid_t pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
};

// Objective-facing convenience for the prior recipes.
inline Configuration generate_prior(Objective& objective, PriorKind kind,
                                    std::uint64_t prior_seed, std::uint64_t run_seed,
                                    const PriorGenOptions& opts = {}) {
  const std::int64_t z_max = objective.space().fidelity().upper;
  auto loss_at_zmax = [&](const Configuration& c) {
    Rng rng = make_rng(0);  // top fidelity is noise-free; the stream is unused
    return objective.evaluate(c, z_max, rng);
  };
  return generate_prior_mode(objective.space(), loss_at_zmax, objective.analytic_optimum(), kind,
                             prior_seed, run_seed, opts);
}

}  // namespace priorband
