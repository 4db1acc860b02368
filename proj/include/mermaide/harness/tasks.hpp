// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mermaide/agents/learners.hpp"
#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/env/bandit.hpp"
#include "mermaide/harness/config.hpp"
#include "mermaide/learning/meta.hpp"
#include "mermaide/principal/bandit_principal.hpp"

namespace mermaide::harness {

enum class TaskSplit : std::uint64_t { Train = 1, Test = 2 };

/// Base rewards i.i.d. U(0,1) with a unique maximum; a* uniform among the
/// remaining arms. Train and test sets draw from disjoint streams of `seed`.
inline std::vector<env::BanditTask> generate_task_set(std::uint64_t seed, int n, int num_arms,
                                                      TaskSplit split = TaskSplit::Train,
                                                      const LearnerSpec& learner = {},
                                                      double reward_noise = env::kDefaultRewardNoise,
                                                      bool noise_is_variance = false) {
  if (n < 1) throw ConfigError("task count must be >= 1");
  if (num_arms < 2) throw ConfigError("num_arms must be >= 2");
  Rng rng = Rng(seed).split(static_cast<std::uint64_t>(split));
  std::vector<env::BanditTask> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    env::BanditTask t;
    t.rewards.resize(static_cast<std::size_t>(num_arms));
    for (auto& r : t.rewards) r = rng.uniform();
    const int best = t.best_arm();
    bool unique = true;
    for (int a = 0; a < num_arms; ++a)
      if (a != best && t.rewards[static_cast<std::size_t>(a)] == t.rewards[static_cast<std::size_t>(best)])
        unique = false;
    if (!unique) continue;
    const int k = rng.index(num_arms - 1);
    t.a_star = k < best ? k : k + 1;
    t.learner = learner;
    t.reward_noise = reward_noise;
    t.noise_is_variance = noise_is_variance;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<env::BanditTask> with_learner(std::vector<env::BanditTask> tasks, const LearnerSpec& l) {
  for (auto& t : tasks) t.learner = l;
  return tasks;
}

inline std::vector<env::BanditTask> train_tasks(const ExperimentConfig& c, const LearnerSpec& l) {
  return generate_task_set(c.tasks.seed, c.tasks.n_train, c.tasks.num_arms, TaskSplit::Train, l,
                           c.tasks.reward_noise, c.tasks.noise_is_variance);
}

inline std::vector<env::BanditTask> test_tasks(const ExperimentConfig& c, const LearnerSpec& l) {
  return generate_task_set(c.tasks.seed, c.tasks.n_test, c.tasks.num_arms, TaskSplit::Test, l,
                           c.tasks.reward_noise, c.tasks.noise_is_variance);
}

/// Steps in one unintervened episode where the agent picks an arm other
/// than the argmax of its base rewards.
inline int exploration_count(const env::BanditTask& task, int horizon, const Rng& rng) {
  principal::NoInterventionPrincipal none;
  const auto tr = principal::run_bandit_episode(task, none, horizon, rng);
  const int best = task.best_arm();
  int n = 0;
  for (const auto& s : tr.steps) n += s.agent_action != best ? 1 : 0;
  return n;
}

struct ExplorationRow {
  LearnerSpec learner;
  double mean = 0.0;
  double se = 0.0;  // over seeds of the per-seed task average
};

/// Per learner: for each seed, the mean exploration count over tasks; then
/// mean and standard error over seeds.
inline std::vector<ExplorationRow> characterize_exploration(const std::vector<env::BanditTask>& tasks,
                                                            const std::vector<LearnerSpec>& grid,
                                                            int horizon,
                                                            const std::vector<std::uint64_t>& seeds) {
  if (tasks.empty()) throw ConfigError("characterize_exploration: no tasks");
  std::vector<ExplorationRow> out;
  for (const auto& l : grid) {
    std::vector<double> per_seed;
    for (auto s : seeds) {
      double total = 0.0;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto t = tasks[i];
        t.learner = l;
        total += exploration_count(t, horizon, Rng(s).split(i));
      }
      per_seed.push_back(total / static_cast<double>(tasks.size()));
    }
    const auto [m, se] = learning::mean_se(per_seed);
    out.push_back({l, m, se});
  }
  return out;
}

/// Reference exploration counts (T = 200) for the UCB beta grid and the
/// eps-greedy grid, in grid order.
inline const std::vector<double>& reference_ucb_exploration() {
  static const std::vector<double> v{33, 47, 70, 80, 99};
  return v;
}
inline const std::vector<double>& reference_eps_exploration() {
  static const std::vector<double> v{33, 47, 68, 81, 99};
  return v;
}

/// Bisection on beta so that the mean UCB exploration count over `tasks`
/// matches `target`. Counts are nondecreasing in beta up to sampling noise.
inline double calibrate_beta(const std::vector<env::BanditTask>& tasks, double target, int horizon,
                             const std::vector<std::uint64_t>& seeds, double lo = 0.01, double hi = 3.0,
                             int iterations = 25) {
  auto count = [&](double beta) {
    return characterize_exploration(tasks, {{Algorithm::Ucb, beta}}, horizon, seeds).front().mean;
  };
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Fixed base-reward vectors for the behavior characterization.
struct B3Vector {
  std::string id;
  std::vector<double> rewards;
  int a_star;
};

inline const std::vector<B3Vector>& b3_vectors() {
  static const std::vector<B3Vector> v{
      {"fig7", {0.16, 0.11, 0.66, 0.14, 0.20, 0.37, 0.82, 0.10, 0.84, 0.10}, 6},
      {"fig8", {0.32, 0.67, 0.13, 0.72, 0.29, 0.18, 0.59, 0.02, 0.83, 0.01}, 6},
      {"fig9", {0.79, 0.53, 0.57, 0.93, 0.07, 0.09, 0.02, 0.83, 0.78, 0.87}, 6},
  };
  return v;
}

inline const B3Vector& b3_vector(const std::string& id) {
  for (const auto& v : b3_vectors())
    if (v.id == id) return v;
  throw ConfigError("unknown behavior vector '" + id + "'");
}

}  // namespace mermaide::harness
