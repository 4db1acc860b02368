// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mermaide/core/error.hpp"

namespace mermaide::principal {

/// Intervene every tenth step.
inline double rule_s1(int t, double level = 1.0) {
  if (t < 1) throw ConfigError("steps are counted from 1");
  return t % 10 == 0 ? level : 0.0;
}

/// Intervene on each of the first twenty steps.
inline double rule_s2(int t, double level = 1.0) {
  if (t < 1) throw ConfigError("steps are counted from 1");
  return t <= 20 ? level : 0.0;
}

/// Intervene exactly when the agent is about to choose something other than a*.
inline double rule_rb(int a_next, int a_star, double level = 1.0) {
  return a_next != a_star ? level : 0.0;
}

}  // namespace mermaide::principal
