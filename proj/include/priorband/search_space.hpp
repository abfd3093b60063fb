#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "priorband/rng.hpp"

namespace priorband {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ParamKind { Continuous, Integer, Categorical, Constant };

using ParamValue = std::variant<double, std::int64_t, std::string>;

struct ParameterDef {
  std::string name;
  ParamKind kind = ParamKind::Continuous;
  double lower = 0.0;  // numeric kinds
  double upper = 0.0;
  bool log_scaled = false;
  std::vector<std::string> choices;  // categorical kind
  ParamValue fixed_value;            // constant kind

  bool numeric() const { return kind == ParamKind::Continuous || kind == ParamKind::Integer; }
};

struct FidelityDef {
  std::string name;
  std::int64_t lower = 1;
  std::int64_t upper = 1;
  bool log_scaled = false;
};

// A point in the space: one native value per non-constant parameter, in the
// space's parameter order. Constant parameters are implicit.
struct Configuration {
  std::vector<ParamValue> values;

  bool operator==(const Configuration&) const = default;
};

// Unit-cube image of a configuration. Categorical dimensions keep their exact
// choice index next to the derived real coordinate so denormalize never has
// to round a category back from a float.
struct UnitVector {
  std::vector<double> coords;           // in [0,1], one per non-constant parameter
  std::vector<std::int32_t> cat_index;  // -1 on numeric dimensions
};

inline const char* param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::Continuous: return "continuous";
    case ParamKind::Integer: return "integer";
    case ParamKind::Categorical: return "categorical";
    case ParamKind::Constant: return "constant";
  }
  return "?";
}

// Mixed-type search space plus a single integer-valued fidelity dimension.
// Immutable after construction; all methods are const and safe to share.
class SearchSpace {
 public:
  SearchSpace(std::vector<ParameterDef> params, FidelityDef fidelity)
      : params_(std::move(params)), fidelity_(std::move(fidelity)) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      if (!names.insert(p.name).second)
        throw ValidationError("duplicate parameter name: " + p.name);
      if (p.numeric()) {
        if (!(p.lower < p.upper))
          throw ValidationError("parameter " + p.name + ": lower must be < upper");
        if (p.log_scaled && !(p.lower > 0))
          throw ValidationError("parameter " + p.name + ": log scale needs lower > 0");
      } else if (p.kind == ParamKind::Categorical) {
        if (p.choices.empty())
          throw ValidationError("parameter " + p.name + ": choices must be non-empty");
        std::set<std::string> uniq(p.choices.begin(), p.choices.end());
        if (uniq.size() != p.choices.size())
          throw ValidationError("parameter " + p.name + ": choices must be unique");
      }
      if (p.kind != ParamKind::Constant) free_idx_.push_back(i);
    }
    if (names.count(fidelity_.name))
      throw ValidationError("fidelity " + fidelity_.name + " must not be a tunable parameter");
    if (!(0 < fidelity_.lower && fidelity_.lower < fidelity_.upper))
      throw ValidationError("fidelity bounds must satisfy 0 < lower < upper");
  }

  const std::vector<ParameterDef>& parameters() const { return params_; }
  const FidelityDef& fidelity() const { return fidelity_; }
  std::size_t free_count() const { return free_idx_.size(); }
  const ParameterDef& free_param(std::size_t d) const { return params_[free_idx_[d]]; }

  void validate(const Configuration& c) const {
    if (c.values.size() != free_idx_.size())
      throw ValidationError("configuration has " + std::to_string(c.values.size()) +
                            " values, space expects " + std::to_string(free_idx_.size()));
    for (std::size_t d = 0; d < free_idx_.size(); ++d) validate_value(free_param(d), c.values[d]);
  }

  // Value of any parameter by name; constants resolve to their fixed value.
  ParamValue value_of(const Configuration& c, const std::string& name) const {
    for (std::size_t d = 0; d < free_idx_.size(); ++d)
      if (free_param(d).name == name) return c.values[d];
    for (const auto& p : params_)
      if (p.kind == ParamKind::Constant && p.name == name) return p.fixed_value;
    throw ValidationError("unknown parameter: " + name);
  }

  UnitVector normalize(const Configuration& c) const {
    validate(c);
    UnitVector u;
    u.coords.resize(free_idx_.size());
    u.cat_index.assign(free_idx_.size(), -1);
    for (std::size_t d = 0; d < free_idx_.size(); ++d) {
      const auto& p = free_param(d);
      if (p.kind == ParamKind::Categorical) {
        const auto& label = std::get<std::string>(c.values[d]);
        const auto it = std::find(p.choices.begin(), p.choices.end(), label);
        const auto idx = static_cast<std::int32_t>(it - p.choices.begin());
        u.cat_index[d] = idx;
        const std::size_t k = p.choices.size();
        u.coords[d] = k > 1 ? static_cast<double>(idx) / static_cast<double>(k - 1) : 0.0;
      } else {
        u.coords[d] = to_unit(p, numeric_value(c.values[d]));
      }
    }
    return u;
  }

  Configuration denormalize(const UnitVector& u) const {
    if (u.coords.size() != free_idx_.size())
      throw ValidationError("unit vector dimension mismatch");
    Configuration c;
    c.values.resize(free_idx_.size());
    for (std::size_t d = 0; d < free_idx_.size(); ++d) {
      const auto& p = free_param(d);
      if (p.kind == ParamKind::Categorical) {
        const std::int32_t idx = u.cat_index[d];
        if (idx < 0 || idx >= static_cast<std::int32_t>(p.choices.size()))
          throw ValidationError("parameter " + p.name + ": categorical index out of range");
        c.values[d] = p.choices[static_cast<std::size_t>(idx)];
      } else {
        const double x = u.coords[d];
        if (!(x >= 0.0 && x <= 1.0))
          throw ValidationError("parameter " + p.name + ": unit coordinate outside [0,1]");
        const double native = from_unit(p, x);
        if (p.kind == ParamKind::Integer) {
          auto v = static_cast<std::int64_t>(std::llround(native));
          v = std::clamp(v, static_cast<std::int64_t>(std::ceil(p.lower)),
                         static_cast<std::int64_t>(std::floor(p.upper)));
          c.values[d] = v;
        } else {
          c.values[d] = std::clamp(native, p.lower, p.upper);
        }
      }
    }
    return c;
  }

  // Uniform in normalized coordinates (so log-scaled dimensions are uniform
  // in their log domain) and uniform over categorical choices.
  Configuration sample_uniform(Rng& rng) const {
    UnitVector u;
    u.coords.resize(free_idx_.size());
    u.cat_index.assign(free_idx_.size(), -1);
    for (std::size_t d = 0; d < free_idx_.size(); ++d) {
      const auto& p = free_param(d);
      if (p.kind == ParamKind::Categorical) {
        const auto k = static_cast<std::int32_t>(p.choices.size());
        const auto idx =
            std::min<std::int32_t>(static_cast<std::int32_t>(uniform01(rng) * k), k - 1);
        u.cat_index[d] = idx;
        u.coords[d] = k > 1 ? static_cast<double>(idx) / static_cast<double>(k - 1) : 0.0;
      } else {
        u.coords[d] = uniform01(rng);
      }
    }
    return denormalize(u);
  }

 private:
  static double numeric_value(const ParamValue& v) {
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    if (std::holds_alternative<std::int64_t>(v))
      return static_cast<double>(std::get<std::int64_t>(v));
    throw ValidationError("expected a numeric value");
  }

  void validate_value(const ParameterDef& p, const ParamValue& v) const {
    switch (p.kind) {
      case ParamKind::Continuous: {
        if (!std::holds_alternative<double>(v) && !std::holds_alternative<std::int64_t>(v))
          throw ValidationError("parameter " + p.name + ": expected a real value");
        const double x = numeric_value(v);
        if (!(x >= p.lower && x <= p.upper))
          throw ValidationError("parameter " + p.name + ": value " + std::to_string(x) +
                                " outside [" + std::to_string(p.lower) + ", " +
                                std::to_string(p.upper) + "]");
        break;
      }
      case ParamKind::Integer: {
        if (!std::holds_alternative<std::int64_t>(v))
          throw ValidationError("parameter " + p.name + ": expected an integer value");
        const double x = numeric_value(v);
        if (!(x >= p.lower && x <= p.upper))
          throw ValidationError("parameter " + p.name + ": value " + std::to_string(x) +
                                " outside bounds");
        break;
      }
      case ParamKind::Categorical: {
        if (!std::holds_alternative<std::string>(v))
          throw ValidationError("parameter " + p.name + ": expected a categorical label");
        const auto& label = std::get<std::string>(v);
        if (std::find(p.choices.begin(), p.choices.end(), label) == p.choices.end())
          throw ValidationError("parameter " + p.name + ": unknown choice '" + label + "'");
        break;
      }
      case ParamKind::Constant:
        throw ValidationError("parameter " + p.name + ": constants carry no free value");
    }
  }

  double to_unit(const ParameterDef& p, double x) const {
    if (!(x >= p.lower && x <= p.upper))
      throw ValidationError("parameter " + p.name + ": value outside bounds");
    if (p.log_scaled)
      return (std::log(x) - std::log(p.lower)) / (std::log(p.upper) - std::log(p.lower));
    return (x - p.lower) / (p.upper - p.lower);
  }

  double from_unit(const ParameterDef& p, double u) const {
    if (p.log_scaled)
      return std::exp(std::log(p.lower) + u * (std::log(p.upper) - std::log(p.lower)));
    return p.lower + u * (p.upper - p.lower);
  }

  std::vector<ParameterDef> params_;
  std::vector<std::size_t> free_idx_;
  FidelityDef fidelity_;
};

// --- JSON interchange -------------------------------------------------------
//
// Space file layout:
//   { "parameters": [ {name, kind, lower, upper, log, choices, value}, ... ],
//     "fidelity":   {name, lower, upper, log} }

inline ParamValue param_value_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_boolean()) return std::string(j.get<bool>() ? "true" : "false");
  throw ValidationError("unsupported parameter value in JSON: " + j.dump());
}

inline nlohmann::json param_value_to_json(const ParamValue& v) {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  return std::get<std::string>(v);
}

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
  std::vector<ParameterDef> params;
  for (const auto& pj : j.at("parameters")) {
    ParameterDef p;
    p.name = pj.at("name").get<std::string>();
    const auto kind = pj.at("kind").get<std::string>();
    if (kind == "continuous") p.kind = ParamKind::Continuous;
    else if (kind == "integer") p.kind = ParamKind::Integer;
    else if (kind == "categorical") p.kind = ParamKind::Categorical;
    else if (kind == "constant") p.kind = ParamKind::Constant;
    else throw ValidationError("parameter " + p.name + ": unknown kind '" + kind + "'");

    if (p.numeric()) {
      p.lower = pj.at("lower").get<double>();
      p.upper = pj.at("upper").get<double>();
      p.log_scaled = pj.value("log", false);
    } else if (p.kind == ParamKind::Categorical) {
      for (const auto& c : pj.at("choices")) p.choices.push_back(c.get<std::string>());
    } else {
      p.fixed_value = param_value_from_json(pj.at("value"));
    }
    params.push_back(std::move(p));
  }
  const auto& fj = j.at("fidelity");
  FidelityDef f{fj.at("name").get<std::string>(), fj.at("lower").get<std::int64_t>(),
                fj.at("upper").get<std::int64_t>(), fj.value("log", false)};
  return SearchSpace(std::move(params), std::move(f));
}

inline SearchSpace load_search_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open search-space file: " + path);
  nlohmann::json j;
  in >> j;
  return search_space_from_json(j);
}

inline nlohmann::json config_to_json(const SearchSpace& space, const Configuration& c,
                                     bool include_constants = false) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t d = 0; d < space.free_count(); ++d)
    j[space.free_param(d).name] = param_value_to_json(c.values[d]);
  if (include_constants)
    for (const auto& p : space.parameters())
      if (p.kind == ParamKind::Constant) j[p.name] = param_value_to_json(p.fixed_value);
  return j;
}

inline Configuration config_from_json(const SearchSpace& space, const nlohmann::json& j) {
  Configuration c;
  c.values.resize(space.free_count());
  for (std::size_t d = 0; d < space.free_count(); ++d) {
    const auto& p = space.free_param(d);
    if (!j.contains(p.name)) throw ValidationError("configuration missing parameter: " + p.name);
    ParamValue v = param_value_from_json(j.at(p.name));
    // JSON readers may hand back an integer literal for a continuous value or
    // a float for an integer parameter; coerce where lossless.
    if (p.kind == ParamKind::Continuous && std::holds_alternative<std::int64_t>(v))
      v = static_cast<double>(std::get<std::int64_t>(v));
    if (p.kind == ParamKind::Integer && std::holds_alternative<double>(v)) {
      const double x = std::get<double>(v);
      if (x == std::floor(x)) v = static_cast<std::int64_t>(x);
    }
    c.values[d] = std::move(v);
  }
  space.validate(c);
  return c;
}

}  // namespace priorband
