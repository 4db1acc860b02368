// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"

namespace mermaide::agents {

enum class StackelbergAction { Cooperate = 0, Defect = 1 };

inline const char* to_string(StackelbergAction a) {
  return a == StackelbergAction::Cooperate ? "C" : "D";
}

/// Single-round follower: sees the principal's move and the payoff matrix.
/// NI: cooperate iff u >= 1-u. IN: cooperate iff u+1 >= -u. Ties cooperate.
inline StackelbergAction best_response_single_round(double u, bool principal_intervened) {
  const double cooperate = principal_intervened ? u + 1.0 : u;
  const double defect = principal_intervened ? -u : 1.0 - u;
  return cooperate >= defect ? StackelbergAction::Cooperate : StackelbergAction::Defect;
}

/// Multi-round follower that cannot see the principal's move. It keeps a
/// running average of the payoffs it experienced per action, tries each
/// action once (cooperate first), then plays the argmax (ties cooperate).
struct RunningAverageState {
  std::array<double, 2> estimates{0.0, 0.0};
  std::array<int, 2> counts{0, 0};

  friend bool operator==(const RunningAverageState&, const RunningAverageState&) = default;
};

inline StackelbergAction best_response_running_average(const RunningAverageState& s) {
  if (s.counts[0] == 0) return StackelbergAction::Cooperate;
  if (s.counts[1] == 0) return StackelbergAction::Defect;
  return s.estimates[0] >= s.estimates[1] ? StackelbergAction::Cooperate
                                          : StackelbergAction::Defect;
}

inline RunningAverageState running_average_update(RunningAverageState s, StackelbergAction a,
                                                  double observed_payoff) {
  const auto i = static_cast<std::size_t>(a);
  s.counts[i] += 1;
  s.estimates[i] += (observed_payoff - s.estimates[i]) / s.counts[i];
  return s;
}

}  // namespace mermaide::agents
