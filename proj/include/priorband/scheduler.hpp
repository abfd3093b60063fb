#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "priorband/search_space.hpp"

namespace priorband {

enum class Accounting { Continuation, Fresh };

inline const char* accounting_name(Accounting a) {
  return a == Accounting::Continuation ? "continuation" : "fresh";
}

inline Accounting accounting_from_name(const std::string& s) {
  if (s == "continuation") return Accounting::Continuation;
  if (s == "fresh") return Accounting::Fresh;
  throw ValidationError("unknown accounting mode: " + s);
}

// Geometric fidelity ladder: rung j carries z_max * eta^(j - s_max), rounded
// up to the next integer below the top so the ladder is strictly increasing
// and never dips under z_min; the top rung is exactly z_max.
struct RungLadder {
  int eta = 3;
  std::int64_t z_min = 1;
  std::int64_t z_max = 1;
  int s_max = 0;
  std::vector<std::int64_t> fidelities;  // index = rung, 0..s_max

  std::int64_t fidelity_at(int rung) const {
    if (rung < 0 || rung > s_max) throw std::invalid_argument("rung out of range");
    return fidelities[static_cast<std::size_t>(rung)];
  }
};

inline RungLadder sh_geometry(std::int64_t z_min, std::int64_t z_max, int eta) {
  if (!(0 < z_min && z_min < z_max)) throw std::invalid_argument("need 0 < z_min < z_max");
  if (eta < 2) throw std::invalid_argument("eta must be >= 2");

  // Largest s with z_min * eta^s <= z_max, by exact integer arithmetic.
  int s_max = 0;
  std::int64_t step = z_min;
  while (step <= z_max / eta) {
    step *= eta;
    ++s_max;
  }

  RungLadder ladder{eta, z_min, z_max, s_max, {}};
  ladder.fidelities.resize(static_cast<std::size_t>(s_max) + 1);
  std::int64_t divisor = 1;
  for (int j = s_max; j >= 0; --j) {
    ladder.fidelities[static_cast<std::size_t>(j)] =
        j == s_max ? z_max : (z_max + divisor - 1) / divisor;  // ceil(z_max / eta^(s_max-j))
    divisor *= eta;
  }
  return ladder;
}

// One SH bracket of the HyperBand plan: n_s fresh samples entering at
// base_rung and surviving by factors of eta up to the top rung.
struct ShBracketSpec {
  int s = 0;          // SH index, s_max down to 0
  int base_rung = 0;  // s_max - s
  int initial_count = 0;
  std::int64_t base_fidelity = 0;
};

struct BracketPlan {
  std::vector<ShBracketSpec> brackets;  // in execution order (s = s_max .. 0)

  int total_policy_draws() const {
    int total = 0;
    for (const auto& b : brackets) total += b.initial_count;
    return total;
  }
};

inline BracketPlan hb_bracket_plan(const RungLadder& ladder) {
  BracketPlan plan;
  for (int s = ladder.s_max; s >= 0; --s) {
    std::int64_t pow_s = 1;
    for (int i = 0; i < s; ++i) pow_s *= ladder.eta;
    const std::int64_t num = static_cast<std::int64_t>(ladder.s_max + 1) * pow_s;
    const auto n = static_cast<int>((num + s) / (s + 1));  // ceil(num / (s+1))
    const int base_rung = ladder.s_max - s;
    plan.brackets.push_back({s, base_rung, n, ladder.fidelity_at(base_rung)});
  }
  return plan;
}

// A completed evaluation. loss = +inf marks a failed/diverged training; such
// observations are never promoted and never become the incumbent.
struct Observation {
  std::int64_t config_id = -1;
  Configuration config;
  int rung = 0;
  std::int64_t fidelity = 0;
  double loss = std::numeric_limits<double>::infinity();
  int bracket_id = -1;  // -1: outside any bracket chain (e.g. the mode-first evaluation)
  int worker_id = 0;
  double start_time = 0.0;
  double end_time = 0.0;
  double charged = 0.0;  // epochs billed under the active accounting mode

  bool failed() const { return !std::isfinite(loss); }
};

using History = std::vector<Observation>;

inline double consumed_budget(const History& history) {
  double total = 0.0;
  for (const auto& o : history) total += o.charged;
  return total;
}

// Deterministic ordering for promotions and incumbent ties.
inline bool better_observation(const Observation& a, const Observation& b) {
  if (a.loss != b.loss) return a.loss < b.loss;
  if (a.end_time != b.end_time) return a.end_time < b.end_time;
  return a.config_id < b.config_id;
}

inline const Observation* try_incumbent(const History& history) {
  const Observation* best = nullptr;
  for (const auto& o : history) {
    if (o.failed()) continue;
    if (!best || better_observation(o, *best)) best = &o;
  }
  return best;
}

// Lowest-loss observation across the whole history, any fidelity; ties go to
// the earliest finisher.
inline const Observation& incumbent(const History& history) {
  const Observation* best = try_incumbent(history);
  if (!best) throw std::invalid_argument("incumbent undefined: no finished evaluation");
  return *best;
}

// Highest fidelity at which this configuration already ran inside the same
// bracket chain; 0 when it never did.
inline std::int64_t highest_prior_fidelity(const History& history, int bracket_id,
                                           std::int64_t config_id) {
  std::int64_t best = 0;
  for (const auto& o : history)
    if (o.bracket_id == bracket_id && o.config_id == config_id) best = std::max(best, o.fidelity);
  return best;
}

// Continuation bills only the fidelity delta over the configuration's last
// checkpoint in the chain; Fresh bills the full fidelity every time.
inline double charge_for(Accounting mode, std::int64_t fidelity, std::int64_t previous_fidelity) {
  if (mode == Accounting::Fresh) return static_cast<double>(fidelity);
  return static_cast<double>(std::max<std::int64_t>(0, fidelity - previous_fidelity));
}

struct PromotionDecision {
  std::int64_t config_id = -1;
  int target_rung = 0;
};

// Synchronous SH promotion: once all expected_count evaluations of the
// bracket at `rung` are in, the floor(count/eta) best (at least one) move up.
// Failed evaluations are counted against the quota but never promoted.
inline std::vector<PromotionDecision> sh_promote(const History& history, int bracket_id, int rung,
                                                 int expected_count, int eta) {
  std::vector<const Observation*> done;
  for (const auto& o : history)
    if (o.bracket_id == bracket_id && o.rung == rung) done.push_back(&o);
  if (static_cast<int>(done.size()) < expected_count) return {};  // rung incomplete

  std::sort(done.begin(), done.end(),
            [](const Observation* a, const Observation* b) { return better_observation(*a, *b); });
  const int quota = std::max(1, static_cast<int>(done.size()) / eta);
  std::vector<PromotionDecision> out;
  for (const Observation* o : done) {
    if (static_cast<int>(out.size()) >= quota) break;
    if (o->failed()) break;  // sorted, so everything after is failed too
    out.push_back({o->config_id, rung + 1});
  }
  return out;
}

// Exact cost of the plan's first SH bracket (the activation threshold for
// incumbent-based sampling) under the given accounting mode.
inline double first_bracket_cost(const RungLadder& ladder, Accounting mode) {
  const BracketPlan plan = hb_bracket_plan(ladder);
  const auto& first = plan.brackets.front();
  double total = 0.0;
  int count = first.initial_count;
  std::int64_t prev = 0;
  for (int rung = first.base_rung; rung <= ladder.s_max; ++rung) {
    const std::int64_t z = ladder.fidelity_at(rung);
    total += static_cast<double>(count) * charge_for(mode, z, prev);
    prev = z;
    if (rung < ladder.s_max) count = std::max(1, count / ladder.eta);
  }
  return total;
}

// Analytic cost of one complete HB iteration under the accounting mode,
// assuming every evaluation succeeds.
inline double hb_iteration_cost(const RungLadder& ladder, Accounting mode) {
  const BracketPlan plan = hb_bracket_plan(ladder);
  double total = 0.0;
  for (const auto& b : plan.brackets) {
    int count = b.initial_count;
    std::int64_t prev = 0;
    for (int rung = b.base_rung; rung <= ladder.s_max; ++rung) {
      const std::int64_t z = ladder.fidelity_at(rung);
      total += static_cast<double>(count) * charge_for(mode, z, prev);
      prev = z;
      if (rung < ladder.s_max) count = std::max(1, count / ladder.eta);
    }
  }
  return total;
}

}  // namespace priorband
