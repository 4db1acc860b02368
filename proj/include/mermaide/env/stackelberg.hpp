// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "mermaide/agents/best_response.hpp"
#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"

namespace mermaide::env {

using agents::StackelbergAction;

enum class StackelbergSetting { SingleRoundPerfect, SingleRoundNoisy, MultiRoundNoisy };

inline const char* to_string(StackelbergSetting s) {
  switch (s) {
    case StackelbergSetting::SingleRoundPerfect: return "single_round_perfect";
    case StackelbergSetting::SingleRoundNoisy: return "single_round_noisy";
    case StackelbergSetting::MultiRoundNoisy: return "multi_round_noisy";
  }
  return "?";
}

inline StackelbergSetting stackelberg_setting_from_string(const std::string& s) {
  if (s == "single_round_perfect") return StackelbergSetting::SingleRoundPerfect;
  if (s == "single_round_noisy") return StackelbergSetting::SingleRoundNoisy;
  if (s == "multi_round_noisy") return StackelbergSetting::MultiRoundNoisy;
  throw ConfigError("unknown Stackelberg setting '" + s + "'");
}

inline constexpr double kDefaultInterventionCost = 0.75;
inline constexpr double kDefaultObsNoise = 0.1;
inline constexpr double kDefaultPayoffNoise = 0.1;

struct StackelbergTask {
  double u = 0.5;
  double c = kDefaultInterventionCost;
  double obs_noise = kDefaultObsNoise;
  double payoff_noise = kDefaultPayoffNoise;
  StackelbergSetting setting = StackelbergSetting::SingleRoundPerfect;
  int horizon = 100;

  void validate() const {
    if (!(u > 0.0 && u < 1.0)) throw ConfigError("agent type u must lie in (0,1)");
    if (!(c < 1.0)) throw ConfigError("intervention cost c must be < 1");
    if (!(obs_noise >= 0.0) || !(payoff_noise >= 0.0)) throw ConfigError("noise must be >= 0");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
  }
};

struct Payoffs {
  double agent = 0.0;
  double principal = 0.0;
};

/// (C,NI) -> (u,1); (C,IN) -> (u+1,1-c); (D,NI) -> (1-u,0); (D,IN) -> (-u,-c)
inline Payoffs stackelberg_payoffs(double u, double c, StackelbergAction agent, bool intervene) {
  if (agent == StackelbergAction::Cooperate)
    return intervene ? Payoffs{u + 1.0, 1.0 - c} : Payoffs{u, 1.0};
  return intervene ? Payoffs{-u, -c} : Payoffs{1.0 - u, 0.0};
}

struct SingleRoundEquilibrium {
  StackelbergAction agent = StackelbergAction::Cooperate;
  bool intervene = false;
  friend bool operator==(const SingleRoundEquilibrium&, const SingleRoundEquilibrium&) = default;
};

/// (C,NI) when u >= 1/2, (C,IN) otherwise.
inline SingleRoundEquilibrium single_round_equilibrium(double u) {
  return u >= 0.5 ? SingleRoundEquilibrium{StackelbergAction::Cooperate, false}
                  : SingleRoundEquilibrium{StackelbergAction::Cooperate, true};
}

/// Leader enumerates its two moves; the follower best-responds to each by
/// comparing its matrix entries (ties cooperate); the leader keeps the move
/// with the higher payoff (ties: no intervention).
inline SingleRoundEquilibrium single_round_equilibrium_brute_force(double u, double c) {
  SingleRoundEquilibrium best{};
  double best_payoff = -1e300;
  for (bool in : {false, true}) {
    const auto pc = stackelberg_payoffs(u, c, StackelbergAction::Cooperate, in);
    const auto pd = stackelberg_payoffs(u, c, StackelbergAction::Defect, in);
    const auto agent = pc.agent >= pd.agent ? StackelbergAction::Cooperate : StackelbergAction::Defect;
    const double principal = agent == StackelbergAction::Cooperate ? pc.principal : pd.principal;
    if (principal > best_payoff) best = {agent, in}, best_payoff = principal;
  }
  return best;
}

/// Grid resolution and comparison slack for the multi-round oracle. The slack
/// absorbs rounding in u + p versus 1 - u - p at grid points that are exact
/// in decimal but not in binary.
inline constexpr double kEquilibriumGridStep = 1e-4;
inline constexpr double kEquilibriumGridSlack = 1e-12;

/// Expected experienced payoffs when the principal intervenes with probability p.
inline double expected_cooperate_payoff(double u, double p) { return u + p; }
inline double expected_defect_payoff(double u, double p) { return 1.0 - u - p; }

inline bool cooperation_weakly_better(double u, double p) {
  return expected_cooperate_payoff(u, p) + kEquilibriumGridSlack >= expected_defect_payoff(u, p);
}

/// Smallest grid intervention probability at which cooperating is weakly
/// better for the running-average agent.
inline double multi_round_intervention_probability(double u, double step = kEquilibriumGridStep) {
  const long n = std::lround(1.0 / step);
  for (long k = 0; k <= n; ++k) {
    const double p = static_cast<double>(k) * step;
    if (cooperation_weakly_better(u, p)) return p;
  }
  return 1.0;
}

/// Indifference point implied by E[C] = E[D]; zero for u >= 1/2.
inline double multi_round_intervention_probability_analytic(double u) {
  return u >= 0.5 ? 0.0 : (1.0 - 2.0 * u) / 2.0;
}

struct EquilibriumDescription {
  StackelbergAction agent = StackelbergAction::Cooperate;
  /// Intervention probability; 0 or 1 in single-round settings.
  double intervene_probability = 0.0;
  /// Multi-round only: grid value minus the analytic indifference point.
  double analytic_discrepancy = 0.0;
};

inline EquilibriumDescription stackelberg_equilibrium_oracle(double u, double c,
                                                             StackelbergSetting setting) {
  if (!(u > 0.0 && u < 1.0)) throw ConfigError("agent type u must lie in (0,1)");
  if (!(c < 1.0)) throw ConfigError("intervention cost c must be < 1");
  if (setting == StackelbergSetting::MultiRoundNoisy) {
    const double p = multi_round_intervention_probability(u);
    return {StackelbergAction::Cooperate, p, p - multi_round_intervention_probability_analytic(u)};
  }
  const auto eq = single_round_equilibrium(u);
  return {eq.agent, eq.intervene ? 1.0 : 0.0, 0.0};
}

/// u + N(0, sigma^2), unclamped.
inline double noisy_type_observation(double u, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("observation noise must be >= 0");
  return rng.normal(u, sigma);
}

}  // namespace mermaide::env
