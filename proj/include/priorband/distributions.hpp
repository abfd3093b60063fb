#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "priorband/rng.hpp"
#include "priorband/search_space.hpp"

namespace priorband {

inline constexpr double default_sigma = 0.25;
inline constexpr double default_perturb_prob = 0.5;

// Gaussian truncated to [lo, hi] and renormalized, so pdf integrates to 1 on
// the interval and sampling matches the pdf exactly.
struct TruncatedNormal {
  double mean = 0.0;
  double sigma = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  static double normal_cdf(double x, double mean, double sigma) {
    return 0.5 * std::erfc(-(x - mean) / (sigma * std::sqrt(2.0)));
  }

  // Mass of the untruncated Gaussian inside [lo, hi].
  double truncation_mass() const {
    return normal_cdf(hi, mean, sigma) - normal_cdf(lo, mean, sigma);
  }

  double pdf(double x) const {
    if (x < lo || x > hi) return 0.0;
    const double z = (x - mean) / sigma;
    const double base = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
    return base / truncation_mass();
  }

  double cdf(double x) const {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    return (normal_cdf(x, mean, sigma) - normal_cdf(lo, mean, sigma)) / truncation_mass();
  }

  double sample(Rng& rng) const {
    // Rejection from the parent Gaussian; acceptance is >= ~0.5 whenever the
    // mean lies inside [lo, hi], which holds for every caller here.
    for (int i = 0; i < 100000; ++i) {
      const double x = normal(rng, mean, sigma);
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(mean, lo, hi);
  }
};

// Weight of the centered choice in the categorical perturbation law: the
// incumbent/mode choice gets weight k, every other choice weight 1, giving
// p(center) = k/(2k-1) and p(other) = 1/(2k-1).
inline double categorical_center_prob(std::size_t k) {
  return static_cast<double>(k) / static_cast<double>(2 * k - 1);
}
inline double categorical_other_prob(std::size_t k) {
  return 1.0 / static_cast<double>(2 * k - 1);
}

inline std::int32_t sample_weighted_choice(std::size_t k, std::int32_t center, Rng& rng) {
  const double u = uniform01(rng) * static_cast<double>(2 * k - 1);
  if (u < static_cast<double>(k)) return center;
  auto j = static_cast<std::int32_t>(u - static_cast<double>(k));
  if (j >= static_cast<std::int32_t>(k) - 1) j = static_cast<std::int32_t>(k) - 2;
  // skip the center slot
  return j >= center ? j + 1 : j;
}

namespace detail {

// Shared per-dimension machinery of the prior and incumbent distributions:
// truncated Gaussians on the unit cube for numeric dimensions, the weighted
// categorical law for discrete ones, centered on a mode configuration.
class CenteredDistribution {
 public:
  CenteredDistribution(const SearchSpace& space, Configuration center, double sigma)
      : space_(&space), center_(std::move(center)), sigma_(sigma) {
    if (!(sigma_ > 0)) throw ValidationError("sigma must be positive");
    center_u_ = space.normalize(center_);  // validates the center
  }

  const SearchSpace& space() const { return *space_; }
  const Configuration& center() const { return center_; }
  const UnitVector& center_unit() const { return center_u_; }
  double sigma() const { return sigma_; }

  TruncatedNormal dim_gaussian(std::size_t d) const {
    return TruncatedNormal{center_u_.coords[d], sigma_, 0.0, 1.0};
  }

  // Joint density over all non-constant dimensions.
  double density(const Configuration& c) const {
    const UnitVector u = space_->normalize(c);
    double prod = 1.0;
    for (std::size_t d = 0; d < space_->free_count(); ++d) {
      const auto& p = space_->free_param(d);
      if (p.kind == ParamKind::Categorical) {
        const std::size_t k = p.choices.size();
        prod *= (u.cat_index[d] == center_u_.cat_index[d]) ? categorical_center_prob(k)
                                                           : categorical_other_prob(k);
      } else {
        prod *= dim_gaussian(d).pdf(u.coords[d]);
      }
    }
    return prod;
  }

  // Independent draw of every dimension from the centered law.
  Configuration sample_all(Rng& rng) const {
    UnitVector u = center_u_;
    for (std::size_t d = 0; d < space_->free_count(); ++d) {
      const auto& p = space_->free_param(d);
      if (p.kind == ParamKind::Categorical) {
        const std::size_t k = p.choices.size();
        const auto idx = k > 1 ? sample_weighted_choice(k, center_u_.cat_index[d], rng)
                               : std::int32_t{0};
        u.cat_index[d] = idx;
        u.coords[d] = k > 1 ? static_cast<double>(idx) / static_cast<double>(k - 1) : 0.0;
      } else {
        u.coords[d] = dim_gaussian(d).sample(rng);
      }
    }
    return space_->denormalize(u);
  }

 protected:
  const SearchSpace* space_;
  Configuration center_;
  UnitVector center_u_;
  double sigma_;
};

}  // namespace detail

// Expert belief over the optimum: N(mode, sigma^2) per numeric dimension in
// normalized coordinates (truncated to [0,1]), weighted categorical per
// discrete dimension.
class PriorDistribution : public detail::CenteredDistribution {
 public:
  PriorDistribution(const SearchSpace& space, Configuration mode, double sigma = default_sigma)
      : CenteredDistribution(space, std::move(mode), sigma) {}

  const Configuration& mode() const { return center(); }
  Configuration sample(Rng& rng) const { return sample_all(rng); }
  double pdf(const Configuration& c) const { return density(c); }
};

// Local-perturbation sampler around the current best configuration. Each
// dimension is perturbed with probability perturb_prob; numeric noise is
// N(0, sigma^2) in normalized coordinates, clamped to the cube.
//
// pdf() is the scoring density (a plain centered Gaussian / weighted
// categorical), not the literal law of sample(): the Bernoulli keep-or-perturb
// mixture would put an atom on the center and make density ratios degenerate.
class IncumbentDistribution : public detail::CenteredDistribution {
 public:
  IncumbentDistribution(const SearchSpace& space, Configuration center,
                        double sigma = default_sigma, double perturb_prob = default_perturb_prob)
      : CenteredDistribution(space, std::move(center), sigma), perturb_prob_(perturb_prob) {
    // p = 0 is allowed as the degenerate no-perturbation case
    if (!(perturb_prob_ >= 0.0 && perturb_prob_ <= 1.0))
      throw ValidationError("perturb_prob must be in [0, 1]");
  }

  double perturb_prob() const { return perturb_prob_; }

  Configuration sample(Rng& rng) const {
    UnitVector u = center_u_;
    for (std::size_t d = 0; d < space_->free_count(); ++d) {
      const bool perturb = uniform01(rng) < perturb_prob_;
      if (!perturb) continue;
      const auto& p = space_->free_param(d);
      if (p.kind == ParamKind::Categorical) {
        const std::size_t k = p.choices.size();
        if (k > 1) {
          const auto idx = sample_weighted_choice(k, center_u_.cat_index[d], rng);
          u.cat_index[d] = idx;
          u.coords[d] = static_cast<double>(idx) / static_cast<double>(k - 1);
        }
      } else {
        u.coords[d] = std::clamp(center_u_.coords[d] + normal(rng, 0.0, sigma_), 0.0, 1.0);
      }
    }
    return space_->denormalize(u);
  }

  double pdf(const Configuration& c) const { return density(c); }

 private:
  double perturb_prob_;
};

enum class PriorKind { NearOptimum, Good, Bad };

inline const char* prior_kind_name(PriorKind k) {
  switch (k) {
    case PriorKind::NearOptimum: return "near-optimum";
    case PriorKind::Good: return "good";
    case PriorKind::Bad: return "bad";
  }
  return "?";
}

inline PriorKind prior_kind_from_name(const std::string& s) {
  if (s == "near-optimum") return PriorKind::NearOptimum;
  if (s == "good") return PriorKind::Good;
  if (s == "bad") return PriorKind::Bad;
  throw ValidationError("unknown prior kind: " + s);
}

struct PriorGenOptions {
  int pool_size = 50000;  // near-optimum / bad pools
  int good_pool_size = 25;
  double perturb_sigma = 0.25;     // per-seed noise on near-optimum modes
  double cat_switch_prob = 0.25;   // per-dimension chance of switching a category
};

// Unperturbed prior mode: best/worst of a uniformly sampled pool scored at
// z_max, or the analytic optimum when the objective exposes one (near-optimum
// only). Deterministic in prior_seed.
inline Configuration prior_base_mode(
    const SearchSpace& space, const std::function<double(const Configuration&)>& loss_at_zmax,
    const std::optional<Configuration>& analytic_optimum, PriorKind kind,
    std::uint64_t prior_seed, const PriorGenOptions& opts = {}) {
  if (kind == PriorKind::NearOptimum && analytic_optimum) return *analytic_optimum;

  const int pool = kind == PriorKind::Good ? opts.good_pool_size : opts.pool_size;
  if (pool < 1) throw ValidationError("prior pool size must be >= 1");
  Rng rng = make_rng(prior_seed, RngStream::PriorBase);
  Configuration best;
  double best_loss = 0.0;
  for (int i = 0; i < pool; ++i) {
    Configuration c = space.sample_uniform(rng);
    const double y = loss_at_zmax(c);
    const bool better = kind == PriorKind::Bad ? y > best_loss : y < best_loss;
    if (i == 0 || better) {
      best = std::move(c);
      best_loss = y;
    }
  }
  return best;
}

// Per-seed near-optimum noise: numeric dimensions move by N(0, 0.25^2) in
// normalized coordinates (clamped), categorical ones switch to a uniformly
// random different choice with probability 0.25, independently per dimension.
inline Configuration perturb_prior_mode(const SearchSpace& space, const Configuration& base,
                                        std::uint64_t run_seed,
                                        const PriorGenOptions& opts = {}) {
  Rng rng = make_rng(run_seed, RngStream::PriorPerturb);
  UnitVector u = space.normalize(base);
  for (std::size_t d = 0; d < space.free_count(); ++d) {
    const auto& p = space.free_param(d);
    if (p.kind == ParamKind::Categorical) {
      const auto k = static_cast<std::int32_t>(p.choices.size());
      if (k > 1 && uniform01(rng) < opts.cat_switch_prob) {
        auto idx = static_cast<std::int32_t>(uniform01(rng) * (k - 1));
        if (idx >= k - 1) idx = k - 2;
        if (idx >= u.cat_index[d]) ++idx;  // uniform over the other k-1 choices
        u.cat_index[d] = idx;
        u.coords[d] = static_cast<double>(idx) / static_cast<double>(k - 1);
      }
    } else {
      u.coords[d] = std::clamp(u.coords[d] + normal(rng, 0.0, opts.perturb_sigma), 0.0, 1.0);
    }
  }
  return space.denormalize(u);
}

// Full prior-mode recipe. Good/bad modes ignore run_seed, so they are shared
// across runs; near-optimum modes get fresh per-run noise.
inline Configuration generate_prior_mode(
    const SearchSpace& space, const std::function<double(const Configuration&)>& loss_at_zmax,
    const std::optional<Configuration>& analytic_optimum, PriorKind kind,
    std::uint64_t prior_seed, std::uint64_t run_seed, const PriorGenOptions& opts = {}) {
  Configuration base =
      prior_base_mode(space, loss_at_zmax, analytic_optimum, kind, prior_seed, opts);
  if (kind == PriorKind::NearOptimum) return perturb_prior_mode(space, base, run_seed, opts);
  return base;
}

}  // namespace priorband
