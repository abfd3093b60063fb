#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "priorband/distributions.hpp"
#include "priorband/scheduler.hpp"
#include "priorband/search_space.hpp"

namespace priorband {

// How the uniform share decays over rungs.
enum class RandomPolicy { Geometric, Linear, Constant50 };
// How the prior share is split against incumbent-based sampling once active.
enum class TradeoffPolicy { DensityScores, ConstantRatio, HalvingDecay };
// Where (and whether) the prior mode is evaluated first.
enum class ModePlacement { ModeAtMax, ModeAtMin, NoMode };

struct EspConfig {
  int eta = 3;
  RandomPolicy random_policy = RandomPolicy::Geometric;
  TradeoffPolicy tradeoff_policy = TradeoffPolicy::DensityScores;
  ModePlacement mode_placement = ModePlacement::ModeAtMax;
};

struct EspProbabilities {
  double p_uniform = 1.0;
  double p_prior = 0.0;
  double p_incumbent = 0.0;
};

enum class Strategy { Uniform, Prior, Incumbent };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Uniform: return "uniform";
    case Strategy::Prior: return "prior";
    case Strategy::Incumbent: return "incumbent";
  }
  return "?";
}

struct TraceRecord {
  std::int64_t index = 0;
  int rung = 0;
  double p_uniform = 0.0;
  double p_prior = 0.0;
  double p_incumbent = 0.0;
  Strategy strategy = Strategy::Uniform;
  std::int64_t config_id = -1;
};

using SamplerTrace = std::vector<TraceRecord>;

// Pre-activation split between uniform and prior sampling at rung r.
// Geometric: p_pi = eta^r * p_u. Linear: the ratio p_pi/p_u moves linearly
// from 1 at the base rung to eta at the top. Constant50: an even split.
inline std::pair<double, double> random_proportion(int r, int s_max, const EspConfig& cfg) {
  if (cfg.eta < 2) throw std::invalid_argument("eta must be >= 2");
  if (r < 0 || r > s_max) throw std::invalid_argument("rung out of range");
  double ratio = 1.0;
  switch (cfg.random_policy) {
    case RandomPolicy::Geometric:
      ratio = std::pow(static_cast<double>(cfg.eta), r);
      break;
    case RandomPolicy::Linear:
      ratio = s_max > 0
                  ? 1.0 + (static_cast<double>(cfg.eta) - 1.0) * static_cast<double>(r) /
                              static_cast<double>(s_max)
                  : 1.0;
      break;
    case RandomPolicy::Constant50:
      ratio = 1.0;
      break;
  }
  const double p_u = 1.0 / (1.0 + ratio);
  return {p_u, 1.0 - p_u};
}

// Incumbent-based sampling unlocks once the budget of the plan's first SH
// bracket has been spent and some configuration has finished at z_max.
inline bool activate_incumbent(const History& history, const RungLadder& ladder,
                               Accounting accounting) {
  bool top_seen = false;
  for (const auto& o : history)
    if (!o.failed() && o.fidelity == ladder.z_max) {
      top_seen = true;
      break;
    }
  if (!top_seen) return false;
  return consumed_budget(history) >= first_bracket_cost(ladder, accounting);
}

// Ordered candidate set for the density scoring: the best max(eta,
// floor(count/eta)) finished configurations of the highest rung holding at
// least eta of them, ranked by loss (ties: end time, then id). Only bracket
// evaluations qualify; the mode-first evaluation lives outside any bracket
// and scoring it would let a bad prior vouch for itself through its own
// peak density.
inline std::optional<std::vector<const Observation*>> top_rung_selection(const History& history,
                                                                         int eta) {
  std::map<int, std::vector<const Observation*>> by_rung;
  for (const auto& o : history)
    if (!o.failed() && o.bracket_id >= 0) by_rung[o.rung].push_back(&o);

  for (auto it = by_rung.rbegin(); it != by_rung.rend(); ++it) {
    auto& obs = it->second;
    if (static_cast<int>(obs.size()) < eta) continue;
    std::sort(obs.begin(), obs.end(), [](const Observation* a, const Observation* b) {
      return better_observation(*a, *b);
    });
    const int count = static_cast<int>(obs.size());
    const int n = std::min(count, std::max(eta, count / eta));
    obs.resize(static_cast<std::size_t>(n));
    return obs;
  }
  return std::nullopt;
}

// Split p_pi_old by the rank-weighted density scores. Densities are given in
// rank order (best first); weights are (n+1)-i for the i-th best.
inline std::pair<double, double> split_by_scores(std::span<const double> prior_density,
                                                 std::span<const double> incumbent_density,
                                                 double p_pi_old) {
  if (prior_density.size() != incumbent_density.size() || prior_density.empty())
    throw std::invalid_argument("density lists must be non-empty and aligned");
  const auto n = prior_density.size();
  double s_prior = 0.0, s_incumbent = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = static_cast<double>(n - i);  // (n+1) - rank, rank = i+1
    s_prior += w * prior_density[i];
    s_incumbent += w * incumbent_density[i];
  }
  const double total = s_prior + s_incumbent;
  if (total <= 0.0) return {0.5 * p_pi_old, 0.5 * p_pi_old};
  return {p_pi_old * s_prior / total, p_pi_old * s_incumbent / total};
}

// Data-driven trade-off between prior and incumbent sampling: score the top
// configurations of the busiest high rung under both densities and hand each
// side its proportional share of p_pi_old.
inline std::pair<double, double> dynamic_weights(const History& history,
                                                 const PriorDistribution& prior,
                                                 const IncumbentDistribution& incumbent_dist,
                                                 int eta, double p_pi_old) {
  const auto selection = top_rung_selection(history, eta);
  if (!selection)
    throw std::invalid_argument("dynamic_weights: no rung holds eta evaluated configurations");
  std::vector<double> prior_d, inc_d;
  prior_d.reserve(selection->size());
  inc_d.reserve(selection->size());
  for (const Observation* o : *selection) {
    prior_d.push_back(prior.pdf(o->config));
    inc_d.push_back(incumbent_dist.pdf(o->config));
  }
  return split_by_scores(prior_d, inc_d, p_pi_old);
}

// Post-activation dispatch over the configured trade-off policy.
// bracket_index is the SH bracket's position within its HB iteration (used by
// the halving-decay variant only).
inline std::pair<double, double> tradeoff_weights(const EspConfig& cfg, const History& history,
                                                  const PriorDistribution& prior,
                                                  const IncumbentDistribution& incumbent_dist,
                                                  int bracket_index, double p_pi_old) {
  switch (cfg.tradeoff_policy) {
    case TradeoffPolicy::DensityScores:
      return dynamic_weights(history, prior, incumbent_dist, cfg.eta, p_pi_old);
    case TradeoffPolicy::ConstantRatio: {
      // p_pi = eta * p_inc
      const double p_inc = p_pi_old / (static_cast<double>(cfg.eta) + 1.0);
      return {p_pi_old - p_inc, p_inc};
    }
    case TradeoffPolicy::HalvingDecay: {
      // p_inc = 2^b * p_pi
      const double factor = std::pow(2.0, bracket_index);
      const double p_pi = p_pi_old / (1.0 + factor);
      return {p_pi, p_pi_old - p_pi};
    }
  }
  throw std::logic_error("unreachable");
}

// Optional first evaluation of a run: the prior mode at the top fidelity
// (default), at the bottom rung's fidelity, or nothing at all.
inline std::optional<std::pair<Configuration, std::int64_t>> first_evaluation_plan(
    const EspConfig& cfg, const PriorDistribution& prior, const RungLadder& ladder) {
  switch (cfg.mode_placement) {
    case ModePlacement::ModeAtMax: return std::make_pair(prior.mode(), ladder.z_max);
    case ModePlacement::ModeAtMin: return std::make_pair(prior.mode(), ladder.fidelity_at(0));
    case ModePlacement::NoMode: return std::nullopt;
  }
  return std::nullopt;
}

// Per-sample selection among uniform, prior and incumbent-based sampling.
//
// Baseline mixtures (random search, HB+Prior variants) fix (p_u, p_pi) and
// never touch the incumbent; the ensemble mode follows the adaptive schedule:
// rung-dependent uniform decay, then a redistribution of the prior share once
// incumbent sampling activates. One instance serves exactly one run and keeps
// the per-draw trace.
class EnsembleSampler {
 public:
  struct FixedMix {
    double p_uniform = 1.0;
  };

  // Baseline policy; prior may be absent when p_uniform == 1.
  EnsembleSampler(const SearchSpace& space, std::optional<PriorDistribution> prior,
                  FixedMix mix, const RungLadder& ladder,
                  ModePlacement placement = ModePlacement::ModeAtMax)
      : space_(&space), prior_(std::move(prior)), fixed_(mix), ladder_(ladder) {
    cfg_.mode_placement = placement;
    if (!prior_ && fixed_->p_uniform < 1.0)
      throw ValidationError("prior-based mixture requires a prior distribution");
  }

  // Full ensemble policy.
  EnsembleSampler(const SearchSpace& space, PriorDistribution prior, EspConfig cfg,
                  const RungLadder& ladder, Accounting accounting,
                  double incumbent_sigma = default_sigma,
                  double perturb_prob = default_perturb_prob)
      : space_(&space),
        prior_(std::move(prior)),
        cfg_(cfg),
        ladder_(ladder),
        accounting_(accounting),
        incumbent_sigma_(incumbent_sigma),
        perturb_prob_(perturb_prob) {}

  const EspConfig& config() const { return cfg_; }
  const std::optional<PriorDistribution>& prior() const { return prior_; }
  const SamplerTrace& trace() const { return trace_; }

  std::optional<std::pair<Configuration, std::int64_t>> first_evaluation() const {
    if (!prior_) return std::nullopt;
    return first_evaluation_plan(cfg_, *prior_, ladder_);
  }

  EspProbabilities probabilities(int rung, int bracket_index, const History& history) const {
    if (fixed_) return {fixed_->p_uniform, 1.0 - fixed_->p_uniform, 0.0};

    auto [p_u, p_pi] = random_proportion(rung, ladder_.s_max, cfg_);
    EspProbabilities probs{p_u, p_pi, 0.0};
    if (!activate_incumbent(history, ladder_, accounting_)) return probs;
    const Observation* best = try_incumbent(history);
    if (!best) return probs;
    if (cfg_.tradeoff_policy == TradeoffPolicy::DensityScores &&
        !top_rung_selection(history, cfg_.eta))
      return probs;  // degenerate history: keep the whole share on the prior

    IncumbentDistribution inc(*space_, best->config, incumbent_sigma_, perturb_prob_);
    auto [pp, pi] = tradeoff_weights(cfg_, history, *prior_, inc, bracket_index, p_pi);
    probs.p_prior = pp;
    probs.p_incumbent = pi;
    return probs;
  }

  // Draw one configuration for a fresh slot at the given rung. The caller
  // assigns the configuration id up front so the trace can reference it.
  Configuration sample(int rung, int bracket_index, const History& history,
                       std::int64_t config_id, Rng& rng) {
    const EspProbabilities probs = probabilities(rung, bracket_index, history);
    const double u = uniform01(rng);
    Strategy strategy;
    if (u < probs.p_uniform) strategy = Strategy::Uniform;
    else if (u < probs.p_uniform + probs.p_prior) strategy = Strategy::Prior;
    else strategy = Strategy::Incumbent;

    Configuration config;
    switch (strategy) {
      case Strategy::Uniform:
        config = space_->sample_uniform(rng);
        break;
      case Strategy::Prior:
        config = prior_->sample(rng);
        break;
      case Strategy::Incumbent: {
        IncumbentDistribution inc(*space_, incumbent(history).config, incumbent_sigma_,
                                  perturb_prob_);
        config = inc.sample(rng);
        break;
      }
    }
    trace_.push_back({static_cast<std::int64_t>(trace_.size()), rung, probs.p_uniform,
                      probs.p_prior, probs.p_incumbent, strategy, config_id});
    return config;
  }

 private:
  const SearchSpace* space_;
  std::optional<PriorDistribution> prior_;
  EspConfig cfg_;
  std::optional<FixedMix> fixed_;
  RungLadder ladder_;
  Accounting accounting_ = Accounting::Continuation;
  double incumbent_sigma_ = default_sigma;
  double perturb_prob_ = default_perturb_prob;
  SamplerTrace trace_;
};

}  // namespace priorband
