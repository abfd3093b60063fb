#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "priorband/bench.hpp"
#include "priorband/esp.hpp"
#include "priorband/scheduler.hpp"

namespace priorband {

enum class Algorithm {
  Rs,
  RsPrior,
  Hb,
  HbPrior,
  HbPrior50,
  PriorBand,
  Asha,
  AshaEsp,
  AsyncHb,
  AsyncHbEsp,
};

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Rs: return "rs";
    case Algorithm::RsPrior: return "rs-prior";
    case Algorithm::Hb: return "hb";
    case Algorithm::HbPrior: return "hb-prior";
    case Algorithm::HbPrior50: return "hb-prior50";
    case Algorithm::PriorBand: return "priorband";
    case Algorithm::Asha: return "asha";
    case Algorithm::AshaEsp: return "asha-esp";
    case Algorithm::AsyncHb: return "async-hb";
    case Algorithm::AsyncHbEsp: return "async-hb-esp";
  }
  return "?";
}

inline Algorithm algorithm_from_name(const std::string& s) {
  for (Algorithm a : {Algorithm::Rs, Algorithm::RsPrior, Algorithm::Hb, Algorithm::HbPrior,
                      Algorithm::HbPrior50, Algorithm::PriorBand, Algorithm::Asha,
                      Algorithm::AshaEsp, Algorithm::AsyncHb, Algorithm::AsyncHbEsp})
    if (s == algorithm_name(a)) return a;
  throw ValidationError("unknown algorithm: " + s);
}

inline bool algorithm_uses_prior(Algorithm a) {
  switch (a) {
    case Algorithm::Rs:
    case Algorithm::Hb:
    case Algorithm::Asha:
    case Algorithm::AsyncHb: return false;
    default: return true;
  }
}

struct OptimizerSpec {
  Algorithm algo = Algorithm::PriorBand;
  EspConfig esp;  // esp.eta is the reduction factor for every algorithm
  double incumbent_sigma = default_sigma;
  double perturb_prob = default_perturb_prob;
};

struct SimulationSpec {
  OptimizerSpec optimizer;
  int workers = 1;
  double budget = 12.0;  // cap, in multiples of z_max
  Accounting accounting = Accounting::Continuation;
  std::uint64_t seed = 0;
};

struct SimulationResult {
  RungLadder ladder;
  BracketPlan plan;
  History history;  // completion order
  SamplerTrace trace;
};

namespace detail {

// One unit of worker occupation: evaluate `config` at `fidelity`, bill
// `charge` epochs, take `charge` units of virtual time.
struct Task {
  std::int64_t config_id = -1;
  Configuration config;
  int rung = 0;
  std::int64_t fidelity = 0;
  int bracket_id = -1;
  double charge = 0.0;
};

// Synchronous SH bracket instance. The current rung's expected evaluations
// are fixed when the stage opens; promotions appear only once the whole
// stage has finished (synchronous semantics).
struct ShBracketRun {
  int id = 0;
  int s = 0;
  int index_in_iteration = 0;  // b of the halving-decay trade-off
  int base_rung = 0;
  int current_rung = 0;
  int expected = 0;
  int finished = 0;
  std::deque<std::optional<std::pair<std::int64_t, Configuration>>> pending;  // nullopt = fresh sample
  bool done = false;
};

// Bookkeeping of asynchronous promotions: (bracket, rung, config) triples
// already promoted, marked at assignment time.
struct AshaState {
  int bracket_id = 0;
  int base_rung = 0;
  std::set<std::pair<int, std::int64_t>> promoted;  // (rung, config_id)
};

class SimulationEngine {
 public:
  SimulationEngine(const SimulationSpec& spec, Objective& objective,
                   const std::optional<PriorDistribution>& prior)
      : spec_(spec),
        objective_(objective),
        ladder_(sh_geometry(objective.space().fidelity().lower, objective.space().fidelity().upper,
                            spec.optimizer.esp.eta)),
        plan_(hb_bracket_plan(ladder_)),
        rng_(make_rng(spec.seed, RngStream::Simulation)),
        sampler_(make_sampler(spec, objective.space(), prior, ladder_)) {
    if (spec.workers < 1) throw ValidationError("workers must be >= 1");
    if (!(spec.budget > 0)) throw ValidationError("budget must be positive");
    if (algorithm_uses_prior(spec.optimizer.algo) && !prior)
      throw ValidationError(std::string(algorithm_name(spec.optimizer.algo)) +
                            " requires a prior");
    cap_epochs_ = spec.budget * static_cast<double>(ladder_.z_max);
    if (spec.optimizer.algo == Algorithm::AsyncHb || spec.optimizer.algo == Algorithm::AsyncHbEsp)
      for (std::size_t i = 0; i < plan_.brackets.size(); ++i)
        asha_states_.push_back({static_cast<int>(i), plan_.brackets[i].base_rung, {}});
    else
      asha_states_.push_back({0, 0, {}});
  }

  SimulationResult run() {
    struct Running {
      Task task;
      double start = 0.0;
      double end = 0.0;
      int worker = -1;
    };
    std::vector<std::optional<Running>> workers(static_cast<std::size_t>(spec_.workers));

    double now = 0.0;
    const auto assign_free_workers = [&] {
      for (int w = 0; w < spec_.workers; ++w) {
        if (workers[static_cast<std::size_t>(w)]) continue;
        if (consumed_budget(history_) >= cap_epochs_) break;
        Task task = next_task();
        const double duration = task.charge;
        workers[static_cast<std::size_t>(w)] = Running{std::move(task), now, now + duration, w};
      }
    };

    assign_free_workers();
    while (true) {
      // earliest completion, ties by worker id
      int next_worker = -1;
      for (int w = 0; w < spec_.workers; ++w) {
        const auto& r = workers[static_cast<std::size_t>(w)];
        if (!r) continue;
        if (next_worker < 0 || r->end < workers[static_cast<std::size_t>(next_worker)]->end)
          next_worker = w;
      }
      if (next_worker < 0) break;  // everything drained

      Running run = std::move(*workers[static_cast<std::size_t>(next_worker)]);
      workers[static_cast<std::size_t>(next_worker)].reset();
      now = run.end;
      complete(run.task, run.start, run.end, run.worker);
      assign_free_workers();
    }

    return SimulationResult{ladder_, plan_, std::move(history_),
                            SamplerTrace(sampler_.trace())};
  }

 private:
  static EnsembleSampler make_sampler(const SimulationSpec& spec, const SearchSpace& space,
                                      const std::optional<PriorDistribution>& prior,
                                      const RungLadder& ladder) {
    const auto placement = spec.optimizer.esp.mode_placement;
    switch (spec.optimizer.algo) {
      case Algorithm::Rs:
      case Algorithm::Hb:
      case Algorithm::Asha:
      case Algorithm::AsyncHb:
        return EnsembleSampler(space, std::nullopt, EnsembleSampler::FixedMix{1.0}, ladder,
                               placement);
      case Algorithm::RsPrior:
      case Algorithm::HbPrior:
        return EnsembleSampler(space, prior, EnsembleSampler::FixedMix{0.0}, ladder, placement);
      case Algorithm::HbPrior50:
        return EnsembleSampler(space, prior, EnsembleSampler::FixedMix{0.5}, ladder, placement);
      case Algorithm::PriorBand:
      case Algorithm::AshaEsp:
      case Algorithm::AsyncHbEsp:
        return EnsembleSampler(space, *prior, spec.optimizer.esp, ladder, spec.accounting,
                               spec.optimizer.incumbent_sigma, spec.optimizer.perturb_prob);
    }
    throw std::logic_error("unreachable");
  }

  Task make_task(std::int64_t config_id, Configuration config, int rung, int bracket_id) {
    const std::int64_t z = ladder_.fidelity_at(rung);
    const std::int64_t prev =
        bracket_id >= 0 ? highest_prior_fidelity(history_, bracket_id, config_id) : 0;
    return Task{config_id, std::move(config), rung, z,
                bracket_id, charge_for(spec_.accounting, z, prev)};
  }

  Task sample_task(int rung, int bracket_index, int bracket_id) {
    const std::int64_t id = next_config_id_++;
    Configuration config = sampler_.sample(rung, bracket_index, history_, id, rng_);
    return make_task(id, std::move(config), rung, bracket_id);
  }

  Task next_task() {
    if (!mode_first_done_) {
      mode_first_done_ = true;
      if (const auto first = sampler_.first_evaluation()) {
        const std::int64_t id = next_config_id_++;
        const int rung = first->second == ladder_.z_max ? ladder_.s_max : 0;
        // outside any bracket chain; charged like any observation
        return Task{id, first->first, rung, first->second, -1,
                    charge_for(spec_.accounting, first->second, 0)};
      }
    }
    switch (spec_.optimizer.algo) {
      case Algorithm::Rs:
      case Algorithm::RsPrior:
        return sample_task(ladder_.s_max, 0, 0);
      case Algorithm::Asha:
      case Algorithm::AshaEsp:
        return asha_task(asha_states_.front());
      case Algorithm::AsyncHb:
      case Algorithm::AsyncHbEsp:
        return async_hb_task();
      default:
        return hb_task();
    }
  }

  // Synchronous HB: serve the earliest active bracket holding unassigned
  // work; open the next bracket (or the next HB iteration) when none does.
  Task hb_task() {
    for (auto& b : brackets_) {
      if (b.done || b.pending.empty()) continue;
      return take_pending(b);
    }
    open_next_bracket();
    return take_pending(brackets_.back());
  }

  Task take_pending(ShBracketRun& b) {
    auto item = std::move(b.pending.front());
    b.pending.pop_front();
    if (item) return make_task(item->first, std::move(item->second), b.current_rung, b.id);
    return sample_task(b.current_rung, b.index_in_iteration, b.id);
  }

  void open_next_bracket() {
    const auto& specs = plan_.brackets;
    const int index = next_bracket_cursor_ % static_cast<int>(specs.size());
    const auto& bs = specs[static_cast<std::size_t>(index)];
    ++next_bracket_cursor_;

    ShBracketRun b;
    b.id = next_bracket_id_++;
    b.s = bs.s;
    b.index_in_iteration = index;
    b.base_rung = bs.base_rung;
    b.current_rung = bs.base_rung;
    b.expected = bs.initial_count;
    b.pending.assign(static_cast<std::size_t>(bs.initial_count), std::nullopt);
    brackets_.push_back(std::move(b));
  }

  // Asynchronous promotion rule: highest rung first, promote the best
  // yet-unpromoted member of the rung's current top floor(count/eta) set;
  // otherwise enter a fresh configuration at the base rung.
  Task asha_task(AshaState& st) {
    for (int rung = ladder_.s_max - 1; rung >= st.base_rung; --rung) {
      std::vector<const Observation*> done;
      int count = 0;
      for (const auto& o : history_) {
        if (o.bracket_id != st.bracket_id || o.rung != rung) continue;
        ++count;
        if (!o.failed()) done.push_back(&o);
      }
      const int quota = count / ladder_.eta;
      if (quota == 0) continue;
      std::sort(done.begin(), done.end(), [](const Observation* a, const Observation* b) {
        return better_observation(*a, *b);
      });
      if (static_cast<int>(done.size()) > quota) done.resize(static_cast<std::size_t>(quota));
      for (const Observation* o : done) {
        if (st.promoted.insert({rung, o->config_id}).second)
          return make_task(o->config_id, o->config, rung + 1, st.bracket_id);
      }
    }
    return sample_task(st.base_rung, st.base_rung, st.bracket_id);
  }

  // Async-HB: draw an SH bracket with probability proportional to its
  // planned base-rung sample count, then run the ASHA rule inside it.
  Task async_hb_task() {
    double total = 0.0;
    for (const auto& bs : plan_.brackets) total += static_cast<double>(bs.initial_count);
    const double u = uniform01(rng_) * total;
    double acc = 0.0;
    std::size_t pick = plan_.brackets.size() - 1;
    for (std::size_t i = 0; i < plan_.brackets.size(); ++i) {
      acc += static_cast<double>(plan_.brackets[i].initial_count);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    return asha_task(asha_states_[pick]);
  }

  void complete(const Task& task, double start, double end, int worker) {
    double loss;
    try {
      loss = objective_.evaluate(task.config, task.fidelity, rng_);
      if (std::isnan(loss)) loss = std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      loss = std::numeric_limits<double>::infinity();
    }
    history_.push_back(Observation{task.config_id, task.config, task.rung, task.fidelity, loss,
                                   task.bracket_id, worker, start, end, task.charge});

    // synchronous promotion once a bracket's stage has fully finished
    for (auto& b : brackets_) {
      if (b.id != task.bracket_id || b.done) continue;
      if (task.rung != b.current_rung) break;
      if (++b.finished < b.expected || !b.pending.empty()) break;
      if (b.current_rung >= ladder_.s_max) {
        b.done = true;
        break;
      }
      const auto promos =
          sh_promote(history_, b.id, b.current_rung, b.expected, ladder_.eta);
      if (promos.empty()) {
        b.done = true;  // every survivor failed
        break;
      }
      b.current_rung += 1;
      b.expected = static_cast<int>(promos.size());
      b.finished = 0;
      for (const auto& p : promos) {
        const Observation* src = nullptr;
        for (const auto& o : history_)
          if (o.bracket_id == b.id && o.config_id == p.config_id && !src) src = &o;
        b.pending.emplace_back(std::make_pair(p.config_id, src->config));
      }
      break;
    }
  }

  SimulationSpec spec_;
  Objective& objective_;
  RungLadder ladder_;
  BracketPlan plan_;
  Rng rng_;
  EnsembleSampler sampler_;
  double cap_epochs_ = 0.0;
  History history_;
  std::vector<ShBracketRun> brackets_;
  std::vector<AshaState> asha_states_;
  int next_bracket_cursor_ = 0;
  int next_bracket_id_ = 0;
  std::int64_t next_config_id_ = 0;
  bool mode_first_done_ = false;
};

}  // namespace detail

// Deterministic discrete-event execution of one optimization run: W virtual
// workers, evaluations lasting their charged epochs, no new assignment once
// the consumed budget reaches the cap (in-flight work still completes).
inline SimulationResult simulate(const SimulationSpec& spec, Objective& objective,
                                 const std::optional<PriorDistribution>& prior = std::nullopt) {
  detail::SimulationEngine engine(spec, objective, prior);
  return engine.run();
}

}  // namespace priorband
