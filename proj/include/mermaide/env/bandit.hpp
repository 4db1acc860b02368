// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mermaide/agents/learners.hpp"
#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"

namespace mermaide::env {

/// Intervention magnitudes available to the bandit principal; cost = level.
inline constexpr std::array<double, 3> kInterventionLevels{0.0, 0.5, 1.0};
inline constexpr int kNumInterventionLevels = 3;

/// Index of an intervention level in kInterventionLevels.
inline int level_index(double level) {
  for (int i = 0; i < kNumInterventionLevels; ++i)
    if (level == kInterventionLevels[static_cast<std::size_t>(i)]) return i;
  throw ConfigError("invalid intervention level " + std::to_string(level) +
                    " (allowed: 0, 0.5, 1)");
}

inline double intervention_cost(double level) { return std::abs(level); }

/// Default reward-noise standard deviation.
inline constexpr double kDefaultRewardNoise = 0.02;

/// One bandit agent: base rewards, the principal's preferred arm and the
/// learner it runs.
struct BanditTask {
  std::vector<double> rewards;
  int a_star = 0;
  /// Reward noise; a standard deviation unless `noise_is_variance`.
  double reward_noise = kDefaultRewardNoise;
  bool noise_is_variance = false;
  agents::LearnerSpec learner;

  int num_arms() const { return static_cast<int>(rewards.size()); }

  int best_arm() const {
    int best = 0;
    for (int a = 1; a < num_arms(); ++a)
      if (rewards[static_cast<std::size_t>(a)] > rewards[static_cast<std::size_t>(best)]) best = a;
    return best;
  }

  /// delta = max r - r[a*]
  double gap() const {
    return rewards[static_cast<std::size_t>(best_arm())] - rewards[static_cast<std::size_t>(a_star)];
  }

  double noise_std() const { return noise_is_variance ? std::sqrt(reward_noise) : reward_noise; }

  void validate(bool allow_preferred_best = false) const {
    if (num_arms() < 2) throw ConfigError("bandit task needs at least two arms");
    if (a_star < 0 || a_star >= num_arms()) throw ConfigError("a_star out of range");
    if (!(reward_noise >= 0.0)) throw ConfigError("reward noise must be >= 0");
    const int b = best_arm();
    for (int a = 0; a < num_arms(); ++a)
      if (a != b && rewards[static_cast<std::size_t>(a)] == rewards[static_cast<std::size_t>(b)])
        throw ConfigError("argmax of base rewards is not unique");
    if (!allow_preferred_best && a_star == b)
      throw ConfigError("a_star coincides with the agent's best arm");
    learner.validate();
  }
};

/// r~[a*] = r[a*] + level, r~[a] = r[a] - level otherwise.
inline std::vector<double> apply_intervention(const std::vector<double>& r, int a_star,
                                              double level) {
  level_index(level);
  if (a_star < 0 || a_star >= static_cast<int>(r.size())) throw ConfigError("a_star out of range");
  std::vector<double> out(r.size());
  for (std::size_t a = 0; a < r.size(); ++a)
    out[a] = static_cast<int>(a) == a_star ? r[a] + level : r[a] - level;
  return out;
}

struct StepOutcome {
  int agent_action = 0;
  double agent_reward = 0.0;
  double principal_reward = 0.0;
  double cost = 0.0;
};

/// Second half of a step once the agent's action is known: sample the
/// intervened reward and feed it back to the learner.
inline StepOutcome bandit_respond(const BanditTask& task, agents::BanditLearner& learner,
                                  int action, double level, Rng& rng) {
  const auto shifted = apply_intervention(task.rewards, task.a_star, level);
  StepOutcome out;
  out.agent_action = action;
  out.agent_reward = rng.normal(shifted.at(static_cast<std::size_t>(action)), task.noise_std());
  out.principal_reward = action == task.a_star ? 1.0 : 0.0;
  out.cost = intervention_cost(level);
  learner.update(action, out.agent_reward);
  return out;
}

/// One environment step: the agent selects from its current state, receives
/// the intervened reward and updates. The agent never sees the intervention
/// before choosing, so computing its action first (as oracle baselines need)
/// gives the same outcome as intervening first.
inline StepOutcome bandit_step(const BanditTask& task, agents::BanditLearner& learner,
                               double level, Rng& rng) {
  level_index(level);
  const int a = learner.select(rng);
  return bandit_respond(task, learner, a, level, rng);
}

}  // namespace mermaide::env
