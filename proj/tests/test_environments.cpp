// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mermaide/env/bandit.hpp"
#include "mermaide/env/stackelberg.hpp"
#include "mermaide/env/trace.hpp"

using namespace mermaide;
using namespace mermaide::env;
using agents::Algorithm;
using agents::StackelbergAction;

TEST(Intervention, HalfLevelTwoArms) {
  const auto r = apply_intervention({0.2, 0.8}, 0, 0.5);
  EXPECT_NEAR(r[0], 0.7, 1e-15);
  EXPECT_NEAR(r[1], 0.3, 1e-15);
}

TEST(Intervention, ZeroLevelIsIdentity) {
  const std::vector<double> r{0.3, 0.1, 0.9};
  EXPECT_EQ(apply_intervention(r, 1, 0.0), r);
}

TEST(Intervention, TenArmVector) {
  const std::vector<double> r{0.16, 0.11, 0.66, 0.14, 0.20, 0.37, 0.82, 0.10, 0.84, 0.10};
  const std::vector<double> want{-0.84, -0.89, -0.34, -0.86, -0.80, -0.63, 1.82, -0.90, -0.16, -0.90};
  const auto got = apply_intervention(r, 6, 1.0);
  for (std::size_t a = 0; a < r.size(); ++a) EXPECT_NEAR(got[a], want[a], 1e-12);
  EXPECT_EQ(r[6], 0.82);
}

TEST(Intervention, InvalidLevelIsConfigError) {
  EXPECT_THROW(apply_intervention({0.1, 0.2}, 0, 0.3), ConfigError);
  EXPECT_THROW(apply_intervention({0.1, 0.2}, 0, -0.5), ConfigError);
  EXPECT_THROW(apply_intervention({0.1, 0.2}, 2, 0.5), ConfigError);
}

TEST(Intervention, ShiftProperty) {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> r(6);
    for (auto& v : r) v = rng.uniform();
    const int a_star = rng.index(6);
    const double level = kInterventionLevels[static_cast<std::size_t>(rng.index(3))];
    const auto s = apply_intervention(r, a_star, level);
    for (int a = 0; a < 6; ++a) {
      const auto i = static_cast<std::size_t>(a);
      if (a == a_star) {
        EXPECT_EQ(s[i], r[i] + level);
        EXPECT_NEAR(s[i] - r[i], level, 1e-15);
      } else {
        EXPECT_EQ(s[i], r[i] - level);
        EXPECT_NEAR(r[i] - s[i], level, 1e-15);
      }
    }
  }
}

TEST(BanditTask, Validation) {
  BanditTask t;
  t.rewards = {0.2, 0.9, 0.4};
  t.a_star = 0;
  EXPECT_NO_THROW(t.validate());
  EXPECT_NEAR(t.gap(), 0.7, 1e-15);
  t.a_star = 1;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_NO_THROW(t.validate(true));
  t.rewards = {0.9, 0.9, 0.4};
  t.a_star = 2;
  EXPECT_THROW(t.validate(), ConfigError);
  t.rewards = {0.2, 0.9};
  t.a_star = 0;
  t.reward_noise = 0.1;
  t.noise_is_variance = true;
  EXPECT_NEAR(t.noise_std(), std::sqrt(0.1), 1e-15);
}

TEST(BanditStep, HandSteppedNoiselessTrace) {
  // eps-greedy with eps = 0 is a deterministic greedy agent.
  BanditTask task;
  task.rewards = {0.6, 0.5, 0.1};
  task.a_star = 1;
  task.reward_noise = 0.0;
  task.learner = {Algorithm::EpsGreedy, 0.0};
  agents::BanditLearner learner(task.learner, 3);
  Rng rng(2);
  // Sweep: arms 0,1,2 with level 0.5 -> rewards 0.1, 1.0, -0.4.
  const double expected[3] = {0.1, 1.0, -0.4};
  for (int a = 0; a < 3; ++a) {
    const auto out = bandit_step(task, learner, 0.5, rng);
    EXPECT_EQ(out.agent_action, a);
    EXPECT_NEAR(out.agent_reward, expected[a], 1e-15);
    EXPECT_EQ(out.principal_reward, a == 1 ? 1.0 : 0.0);
    EXPECT_EQ(out.cost, 0.5);
  }
  // Greedy now picks arm 1 (mean 1.0); without intervention it gets 0.5.
  const auto out = bandit_step(task, learner, 0.0, rng);
  EXPECT_EQ(out.agent_action, 1);
  EXPECT_EQ(out.agent_reward, 0.5);
  EXPECT_EQ(out.cost, 0.0);
  EXPECT_NEAR(learner.state().means[1], 0.75, 1e-15);
}

TEST(BanditStep, DeterministicWithoutNoise) {
  BanditTask task;
  task.rewards = {0.3, 0.7, 0.2, 0.6};
  task.a_star = 2;
  task.reward_noise = 0.0;
  task.learner = {Algorithm::EpsGreedy, 0.3};
  auto run = [&] {
    agents::BanditLearner learner(task.learner, 4);
    Rng rng(3);
    std::vector<int> actions;
    for (int t = 0; t < 200; ++t) actions.push_back(bandit_step(task, learner, 0.0, rng).agent_action);
    return actions;
  };
  EXPECT_EQ(run(), run());
}

TEST(Score, Examples) {
  EpisodeTrace all_hits;
  for (int t = 1; t <= 200; ++t) all_hits.steps.push_back({t, 0, 0.0, 0.0, 0.5, 1.0, 0.0, -1});
  EXPECT_EQ(episode_score(all_hits, 0.2, 1.0), 200.0);
  EpisodeTrace none;
  for (int t = 1; t <= 200; ++t) none.steps.push_back({t, 1, 0.0, 0.0, 0.5, 0.0, 0.0, -1});
  EXPECT_EQ(episode_score(none, 0.2, 1.0), 0.0);
  EpisodeTrace three;
  three.steps = {{1, 0, 1.0, 1.0, 0, 1.0, 0, -1},
                 {2, 1, 0.5, 0.5, 0, 0.0, 0, -1},
                 {3, 0, 0.0, 0.0, 0, 1.0, 0, -1}};
  const double brute = (1.0 - 0.1 * 1.0) + (0.0 - 0.1 * 0.5) + (1.0 - 0.1 * 0.0);
  EXPECT_NEAR(episode_score(three, 0.1, 1.0), brute, 1e-15);
  EXPECT_NEAR(episode_score(three, 0.1, 1.0), 1.85, 1e-12);
  EXPECT_EQ(episode_score(three, 0.0, 1.0), three.count_principal_hits());
  const auto g = returns_to_go(three, 0.1, 0.5);
  EXPECT_NEAR(g[0], episode_score(three, 0.1, 0.5), 1e-15);
  EXPECT_NEAR(g[2], 1.0, 1e-15);
}

TEST(Trace, CsvRoundTrip) {
  EpisodeTrace trace;
  Rng rng(4);
  for (int t = 1; t <= 20; ++t)
    trace.steps.push_back({t, rng.index(10), 0.5, 0.5, rng.normal(0.3, 0.1), t % 2 ? 1.0 : 0.0,
                           std::log(rng.uniform()), rng.index(10)});
  EXPECT_EQ(trace_from_csv(to_csv(trace)), trace);
  const auto path = std::filesystem::temp_directory_path() / "mermaide_trace.csv";
  write_trace_csv(trace, path.string());
  EXPECT_EQ(read_trace_csv(path.string()), trace);
  std::filesystem::remove(path);
  EXPECT_THROW(trace_from_csv("bad header\n"), ConfigError);
  EXPECT_THROW(read_trace_csv("/nonexistent/trace.csv"), IoError);
}

TEST(Stackelberg, PayoffMatrix) {
  auto p = stackelberg_payoffs(0.3, 0.75, StackelbergAction::Cooperate, true);
  EXPECT_NEAR(p.agent, 1.3, 1e-15);
  EXPECT_NEAR(p.principal, 0.25, 1e-15);
  p = stackelberg_payoffs(0.3, 0.75, StackelbergAction::Defect, false);
  EXPECT_NEAR(p.agent, 0.7, 1e-15);
  EXPECT_EQ(p.principal, 0.0);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double u = rng.uniform(0.01, 0.99);
    for (bool in : {false, true}) {
      EXPECT_LE(stackelberg_payoffs(u, 0.75, StackelbergAction::Defect, in).principal, 0.0);
      EXPECT_GE(stackelberg_payoffs(u, 0.75, StackelbergAction::Cooperate, in).principal, 0.25);
    }
  }
}

TEST(Stackelberg, EquilibriumOracle) {
  using S = StackelbergSetting;
  auto eq = stackelberg_equilibrium_oracle(0.93, 0.75, S::SingleRoundPerfect);
  EXPECT_EQ(eq.agent, StackelbergAction::Cooperate);
  EXPECT_EQ(eq.intervene_probability, 0.0);
  EXPECT_EQ(stackelberg_equilibrium_oracle(0.93, 0.75, S::MultiRoundNoisy).intervene_probability, 0.0);
  EXPECT_EQ(stackelberg_equilibrium_oracle(0.5, 0.75, S::MultiRoundNoisy).intervene_probability, 0.0);
  EXPECT_EQ(stackelberg_equilibrium_oracle(0.07, 0.75, S::SingleRoundNoisy).intervene_probability, 1.0);
  const auto m = stackelberg_equilibrium_oracle(0.21, 0.75, S::MultiRoundNoisy);
  EXPECT_NEAR(m.intervene_probability, 0.29, 1e-12);
  EXPECT_LT(std::abs(m.analytic_discrepancy), 1e-4);
  EXPECT_THROW(stackelberg_equilibrium_oracle(1.2, 0.75, S::SingleRoundPerfect), ConfigError);
  EXPECT_THROW(stackelberg_equilibrium_oracle(0.2, 1.0, S::SingleRoundPerfect), ConfigError);
}

TEST(Stackelberg, ClosedFormMatchesBruteForce) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const double u = rng.uniform(1e-6, 1.0 - 1e-6);
    EXPECT_EQ(single_round_equilibrium(u), single_round_equilibrium_brute_force(u, 0.75));
  }
}

TEST(Stackelberg, NoisyObservation) {
  Rng rng(7);
  EXPECT_EQ(noisy_type_observation(0.3, 0.0, rng), 0.3);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = noisy_type_observation(0.3, 0.2, rng);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.3, 3.0 * 0.2 / std::sqrt(n));
  EXPECT_NEAR(sd, 0.2, 0.2 * 0.05);
  EXPECT_THROW(noisy_type_observation(0.3, -1.0, rng), ConfigError);
}
