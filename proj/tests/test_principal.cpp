// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "fd_check.hpp"
#include "mermaide/learning/reinforce.hpp"
#include "mermaide/principal/bandit_principal.hpp"
#include "mermaide/principal/rules.hpp"
#include "mermaide/principal/stackelberg_policy.hpp"

using namespace mermaide;
using namespace mermaide::principal;
using agents::Algorithm;

namespace {

env::BanditTask small_task() {
  env::BanditTask t;
  t.rewards = {0.2, 0.9, 0.4, 0.6};
  t.a_star = 2;
  t.learner = {Algorithm::EpsGreedy, 0.1};
  return t;
}

}  // namespace

TEST(Rules, Examples) {
  EXPECT_EQ(rule_s1(10), 1.0);
  EXPECT_EQ(rule_s1(11), 0.0);
  EXPECT_EQ(rule_s1(200), 1.0);
  EXPECT_EQ(rule_s2(20), 1.0);
  EXPECT_EQ(rule_s2(21), 0.0);
  EXPECT_EQ(rule_rb(6, 6), 0.0);
  EXPECT_EQ(rule_rb(3, 6), 1.0);
  EXPECT_EQ(rule_s1(30, 0.5), 0.5);
}

TEST(Rules, ScheduledPrincipalCost) {
  const auto task = small_task();
  ScheduledPrincipal s1(ScheduledPrincipal::Schedule::S1, 1.0);
  const auto tr = run_bandit_episode(task, s1, 200, Rng(1));
  EXPECT_EQ(tr.total_cost(), 20.0);
  ScheduledPrincipal s2(ScheduledPrincipal::Schedule::S2, 1.0);
  EXPECT_EQ(run_bandit_episode(task, s2, 200, Rng(1)).total_cost(), 20.0);
  NoInterventionPrincipal none;
  EXPECT_EQ(run_bandit_episode(task, none, 200, Rng(1)).total_cost(), 0.0);
}

TEST(Rules, RuleBasedIntervenesExactlyOffTarget) {
  const auto task = small_task();
  RuleBasedPrincipal rb(1.0);
  const auto tr = run_bandit_episode(task, rb, 300, Rng(2));
  for (const auto& s : tr.steps) EXPECT_EQ(s.intervention, s.agent_action == task.a_star ? 0.0 : 1.0);
}

TEST(Networks, ZeroHeadGivesUniformPredictions) {
  Rng rng(3);
  WorldModelNet wm{10, 16, 2};
  const auto omega = wm.init(rng);
  WorldModelRunner runner(wm, omega);
  for (int t = 0; t < 5; ++t) {
    const auto p = runner.predict(t % 10, t % 3);
    for (int a = 0; a < 10; ++a) EXPECT_NEAR(p.dist[static_cast<std::size_t>(a)], 0.1, 1e-12);
  }
  PolicyNet pi{10, Conditioning::Full, 16, 2};
  RecurrentRunner pr(pi.gru(), pi.head(), pi.init(rng));
  const auto lp = pr.step(Matrix::Zero(pi.input_dim(), 1));
  for (int l = 0; l < 3; ++l) EXPECT_NEAR(lp(l, 0), std::log(1.0 / 3.0), 1e-12);
}

TEST(Networks, InputDimensions) {
  EXPECT_EQ((PolicyNet{10, Conditioning::Full}.input_dim()), 23);
  EXPECT_EQ((PolicyNet{10, Conditioning::ModelFree}.input_dim()), 13);
  EXPECT_EQ((PolicyNet{10, Conditioning::WorldModelOnly}.input_dim()), 10);
  EXPECT_EQ((PolicyNet{10, Conditioning::Oracle}.input_dim()), 23);
  EXPECT_EQ((WorldModelNet{10}.input_dim()), 13);
}

TEST(RecurrentPrincipal, WorldModelRequirement) {
  Rng rng(4);
  PolicyNet pi{4, Conditioning::Full, 8, 1};
  EXPECT_THROW(RecurrentPrincipal("x", pi, pi.init(rng)), ConfigError);
  PolicyNet mf{4, Conditioning::ModelFree, 8, 1};
  EXPECT_NO_THROW(RecurrentPrincipal("x", mf, mf.init(rng)));
}

TEST(RecurrentPrincipal, RolloutLogProbsMatchRecomputation) {
  const auto task = small_task();
  for (auto c : {Conditioning::Full, Conditioning::ModelFree, Conditioning::WorldModelOnly,
                 Conditioning::Oracle}) {
    Rng rng(5);
    PolicyNet pi{4, c, 8, 2};
    WorldModelNet wm{4, 8, 2};
    ParamVector theta = pi.init(rng);
    // Nonzero head so the policy is not uniform.
    theta.at("pi.head.W") = fd::random_params(theta, rng).at("pi.head.W");
    std::optional<std::pair<WorldModelNet, ParamVector>> wref;
    if (uses_world_model(c)) wref = std::make_pair(wm, wm.init(rng));
    RecurrentPrincipal pr("p", pi, theta, wref);
    const auto ep = run_recorded_episode(task, pr, 30, Rng(6));
    const auto lp = learning::recomputed_log_probs(pi, theta, {&ep});
    for (int t = 0; t < 30; ++t) EXPECT_NEAR(lp(t, 0), ep.trace.steps[static_cast<std::size_t>(t)].logprob, 1e-9);
    for (int t = 0; t < 30; ++t)
      EXPECT_EQ(env::level_index(ep.trace.steps[static_cast<std::size_t>(t)].intervention),
                ep.policy.levels[static_cast<std::size_t>(t)]);
    if (uses_world_model(c)) {
      for (const auto& s : ep.trace.steps) EXPECT_GE(s.wm_prediction, 0);
    }
  }
}

TEST(RecurrentPrincipal, OracleOrderingLeavesAgentUnchanged) {
  // The agent's action stream does not depend on which principal plays.
  const auto task = small_task();
  NoInterventionPrincipal none;
  RuleBasedPrincipal rb(0.0);  // level 0 never changes rewards
  const auto a = run_bandit_episode(task, none, 100, Rng(8));
  const auto b = run_bandit_episode(task, rb, 100, Rng(8));
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].agent_action, b.steps[i].agent_action);
    EXPECT_EQ(a.steps[i].agent_reward, b.steps[i].agent_reward);
  }
}

TEST(RecurrentPrincipal, Deterministic) {
  const auto task = small_task();
  Rng rng(9);
  PolicyNet pi{4, Conditioning::ModelFree, 8, 1};
  const auto theta = pi.init(rng);
  RecurrentPrincipal p1("p", pi, theta), p2("p", pi, theta);
  EXPECT_EQ(run_bandit_episode(task, p1, 50, Rng(10)), run_bandit_episode(task, p2, 50, Rng(10)));
}

TEST(StackelbergPolicy, LogProbGradientMatchesFiniteDifference) {
  Rng rng(11);
  StackelbergPolicyNet net{6};
  const auto p0 = fd::random_params(net.init(rng), rng);
  Matrix u(1, 5), w(1, 5);
  u << 0.1, 0.3, 0.5, 0.7, 0.9;
  w << 1.0, -0.5, 0.3, 2.0, -1.2;
  const std::vector<int> in{1, 0, 0, 1, 1};
  auto f = [&](const ParamVars& p) { return stackelberg_weighted_log_prob(net, p, u, in, w); };
  const auto v = ParamVars::leaves(p0);
  const auto g = ad::grad(f(v), v);
  const auto num = fd::numeric_gradient([&](const ParamVector& p) { return f(ParamVars::constants(p)).item(); }, p0);
  EXPECT_LT(fd::max_relative_error(g, num), 1e-6);
}

TEST(StackelbergPolicy, ActLogProbConsistent) {
  Rng rng(12);
  StackelbergPolicyNet net{6};
  const auto p = fd::random_params(net.init(rng), rng);
  for (int i = 0; i < 20; ++i) {
    const double u = rng.uniform();
    const auto d = stackelberg_act(net, p, u, rng);
    const double q = net.probability(p, u);
    EXPECT_NEAR(d.probability, q, 1e-15);
    EXPECT_NEAR(d.logprob, std::log(d.intervene ? q : 1.0 - q), 1e-12);
  }
}
