#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "geohj/error.hpp"

namespace geohj {

/// Every numerical tolerance used by checks and solvers.
struct Tolerances {
  double algebraic = 1e-9;     // closed-form identities
  double ode = 1e-6;           // quantities obtained by integrating an ODE
  double energy = 1e-4;        // relative energy spread of discrete minimizers
  double marginal = 1e-10;     // coupling marginals
  double weight_sum = 1e-12;   // probability weights summing to one
  double lp_optimality = 1e-12;
  double gradient = 1e-8;      // path optimizer stopping rule
  double refine = 1e-5;        // relative change accepted by node doubling
  double hj_residual = 1e-10;  // value iteration sup-norm update
  double equivalence = 1e-5;   // relative gap between transport formulations
  double supergradient = 1e-6;
  double monotone = 1e-10;

  bool valid() const {
    for (double t : {algebraic, ode, energy, marginal, weight_sum, lp_optimality, gradient, refine,
                     hj_residual, equivalence, supergradient, monotone}) {
      if (!std::isfinite(t) || t <= 0.0 || t >= 1.0) return false;
    }
    return true;
  }
};

inline const Tolerances& default_tolerances() {
  static const Tolerances t{};
  return t;
}

/// Reads a tolerance record. Unknown keys and non-positive or non-numeric
/// values are configuration errors.
inline Tolerances tolerances_from_json(const nlohmann::json& j) {
  Tolerances t;
  if (!j.is_object()) throw ConfigError("tolerance record must be a JSON object");
  auto field = [&](const char* key, double& slot) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(std::string("tolerance '") + key + "' is not a number");
    slot = v.get<double>();
  };
  static const char* known[] = {"algebraic", "ode", "energy", "marginal", "weight_sum",
                                "lp_optimality", "gradient", "refine", "hj_residual",
                                "equivalence", "supergradient", "monotone"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const char* k : known) found = found || it.key() == k;
    if (!found) throw ConfigError("unknown tolerance '" + it.key() + "'");
  }
  field("algebraic", t.algebraic);
  field("ode", t.ode);
  field("energy", t.energy);
  field("marginal", t.marginal);
  field("weight_sum", t.weight_sum);
  field("lp_optimality", t.lp_optimality);
  field("gradient", t.gradient);
  field("refine", t.refine);
  field("hj_residual", t.hj_residual);
  field("equivalence", t.equivalence);
  field("supergradient", t.supergradient);
  field("monotone", t.monotone);
  if (!t.valid()) throw ConfigError("tolerances must be finite and lie in (0, 1)");
  return t;
}

}  // namespace geohj
