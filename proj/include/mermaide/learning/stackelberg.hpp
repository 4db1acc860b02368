// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mermaide/agents/best_response.hpp"
#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/diffcore/optim.hpp"
#include "mermaide/env/stackelberg.hpp"
#include "mermaide/env/trace.hpp"
#include "mermaide/learning/meta.hpp"
#include "mermaide/learning/reinforce.hpp"
#include "mermaide/principal/stackelberg_policy.hpp"

namespace mermaide::learning {

using principal::StackelbergPolicyNet;

/// Single-round settings: an episode is `plays` independent one-shot games
/// against the same type. Multi-round: `horizon` rounds against a
/// running-average agent that never sees the principal's action.
struct StackelbergConfig {
  env::StackelbergSetting setting = env::StackelbergSetting::SingleRoundPerfect;
  double c = env::kDefaultInterventionCost;
  double obs_noise = env::kDefaultObsNoise;
  double payoff_noise = env::kDefaultPayoffNoise;
  int plays = 20;
  int horizon = 100;
  int num_train_types = 50;
  int epochs = 2000;
  double inner_lr = 7e-4;
  double meta_lr = 1e-3;
  int hidden = 32;
  std::uint64_t seed = 11;
  double baseline_decay = kDefaultBaselineDecay;

  bool single_round() const { return setting != env::StackelbergSetting::MultiRoundNoisy; }
  /// Training discount: plays are independent in single-round settings.
  double gamma() const { return single_round() ? 0.0 : 1.0; }
  int episode_length() const { return single_round() ? plays : horizon; }
  double observation_noise() const {
    return setting == env::StackelbergSetting::SingleRoundPerfect ? 0.0 : obs_noise;
  }

  void validate() const {
    if (!(c < 1.0)) throw ConfigError("intervention cost c must be < 1");
    if (!(obs_noise >= 0.0) || !(payoff_noise >= 0.0)) throw ConfigError("noise must be >= 0");
    if (plays < 1 || horizon < 1) throw ConfigError("episode length must be >= 1");
    if (num_train_types < 1) throw ConfigError("num_train_types must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(inner_lr > 0.0) || !(meta_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
  }
};

/// Observations and choices of one episode; the trace stores agent action
/// (0 = C, 1 = D), intervention (0/1) and the principal's payoff, which
/// already includes the cost, so scores use alpha = 0.
struct StackelbergEpisode {
  env::EpisodeTrace trace;
  Matrix u_obs;  // 1 x length
  std::vector<int> intervened;
};

inline StackelbergEpisode run_stackelberg_episode(const StackelbergPolicyNet& net,
                                                  const ParamVector& theta,
                                                  const StackelbergConfig& cfg, double u,
                                                  const Rng& rng) {
  if (!(u > 0.0 && u < 1.0)) throw ConfigError("agent type u must lie in (0,1)");
  Rng obs_rng = rng.split(1);
  Rng act_rng = rng.split(2);
  Rng payoff_rng = rng.split(3);
  const int n = cfg.episode_length();
  StackelbergEpisode ep;
  ep.u_obs = Matrix(1, n);
  agents::RunningAverageState agent;
  for (int t = 0; t < n; ++t) {
    const double u_obs = env::noisy_type_observation(u, cfg.observation_noise(), obs_rng);
    const auto d = principal::stackelberg_act(net, theta, u_obs, act_rng);
    agents::StackelbergAction a;
    env::Payoffs pay;
    if (cfg.single_round()) {
      a = agents::best_response_single_round(u, d.intervene);
      pay = env::stackelberg_payoffs(u, cfg.c, a, d.intervene);
    } else {
      a = agents::best_response_running_average(agent);
      pay = env::stackelberg_payoffs(u, cfg.c, a, d.intervene);
      agent = agents::running_average_update(agent, a, payoff_rng.normal(pay.agent, cfg.payoff_noise));
    }
    ep.u_obs(0, t) = u_obs;
    ep.intervened.push_back(d.intervene ? 1 : 0);
    const double level = d.intervene ? 1.0 : 0.0;
    ep.trace.steps.push_back({t + 1, static_cast<int>(a), level, level, pay.agent, pay.principal, d.logprob, -1});
  }
  return ep;
}

/// J = (1/E) sum_e sum_t A_{e,t} log pi(action_{e,t} | u_obs_{e,t}).
inline Var stackelberg_objective(const StackelbergPolicyNet& net, const ParamVars& p,
                                 const std::vector<const StackelbergEpisode*>& eps,
                                 const std::vector<std::vector<double>>& adv) {
  if (eps.empty() || adv.size() != eps.size()) throw UsageError("stackelberg_objective: batch mismatch");
  Eigen::Index n = 0;
  for (const auto* e : eps) n += e->u_obs.cols();
  Matrix u(1, n), w(1, n);
  std::vector<int> in;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (adv[i].size() != static_cast<std::size_t>(eps[i]->u_obs.cols()))
      throw UsageError("stackelberg_objective: advantage length mismatch");
    for (Eigen::Index t = 0; t < eps[i]->u_obs.cols(); ++t, ++k) {
      u(0, k) = eps[i]->u_obs(0, t);
      w(0, k) = adv[i][static_cast<std::size_t>(t)] / static_cast<double>(eps.size());
      in.push_back(eps[i]->intervened[static_cast<std::size_t>(t)]);
    }
  }
  return principal::stackelberg_weighted_log_prob(net, p, u, in, w);
}

inline std::vector<std::vector<double>> stackelberg_advantages(
    const std::vector<const StackelbergEpisode*>& eps, double gamma, Baseline& b) {
  std::vector<const env::EpisodeTrace*> traces;
  for (const auto* e : eps) traces.push_back(&e->trace);
  return batch_advantages(traces, 0.0, gamma, b);
}

/// K episodes on type u, each followed by one REINFORCE step.
inline ParamVector stackelberg_adapt(const StackelbergPolicyNet& net, const ParamVector& theta0,
                                     const StackelbergConfig& cfg, double u, int K, const Rng& rng) {
  if (K < 0) throw ConfigError("K must be >= 0");
  ParamVector theta = theta0;
  Baseline b{0.0, false, cfg.baseline_decay};
  for (int k = 0; k < K; ++k) {
    const auto ep = run_stackelberg_episode(net, theta, cfg, u, rng.split(static_cast<std::uint64_t>(k)));
    const auto adv = stackelberg_advantages({&ep}, cfg.gamma(), b);
    const auto v = ParamVars::leaves(theta);
    theta = ad::sgd_step(theta, ad::grad(stackelberg_objective(net, v, {&ep}, adv), v), -cfg.inner_lr);
  }
  return theta;
}

/// Expected intervention probability on type u: exact under perfect
/// observability, otherwise averaged over `draws` noisy observations.
inline double intervention_probability(const StackelbergPolicyNet& net, const ParamVector& theta,
                                       const StackelbergConfig& cfg, double u, const Rng& rng,
                                       int draws = 200) {
  const double sigma = cfg.observation_noise();
  if (sigma == 0.0) return net.probability(theta, u);
  Rng r = rng;
  double s = 0.0;
  for (int i = 0; i < draws; ++i) s += net.probability(theta, env::noisy_type_observation(u, sigma, r));
  return s / draws;
}

enum class StackelbergTrainer { Maml, Rl };

inline const char* to_string(StackelbergTrainer t) { return t == StackelbergTrainer::Maml ? "maml" : "rl"; }

/// Training types u ~ U(0,1), drawn from their own stream.
inline std::vector<double> stackelberg_train_types(const StackelbergConfig& cfg) {
  Rng r = Rng(cfg.seed).split(0x7417);
  std::vector<double> us;
  for (int i = 0; i < cfg.num_train_types; ++i) us.push_back(r.uniform(1e-3, 1.0 - 1e-3));
  return us;
}

struct StackelbergCurvePoint {
  int epoch = 0;
  double u = 0.0;
  double probability = 0.0;  // after one-shot adaptation
};

struct StackelbergTrainResult {
  ParamVector theta;
  std::vector<double> mean_payoff;  // per epoch, per play
  std::vector<StackelbergCurvePoint> curve;
};

/// MAML: second-order outer gradient through one inner REINFORCE step per
/// type. RL: plain REINFORCE on the pooled types.
inline StackelbergTrainResult stackelberg_train(const StackelbergPolicyNet& net,
                                                const StackelbergConfig& cfg,
                                                StackelbergTrainer trainer,
                                                const std::vector<double>& test_types = {},
                                                int curve_every = 0) {
  cfg.validate();
  const Rng root(cfg.seed);
  Rng init_rng = root.split(0xC0FFEE);
  ParamVector theta = net.init(init_rng);
  ad::Adam adam(theta, {cfg.meta_lr});
  const auto types = stackelberg_train_types(cfg);
  std::vector<Baseline> baselines(types.size(), Baseline{0.0, false, cfg.baseline_decay});
  StackelbergTrainResult out;

  auto record_curve = [&](int epoch) {
    for (std::size_t j = 0; j < test_types.size(); ++j) {
      const Rng tr = root.split(500000 + static_cast<std::uint64_t>(epoch) * 64 + j);
      const auto adapted = stackelberg_adapt(net, theta, cfg, test_types[j], 1, tr.split(1));
      out.curve.push_back({epoch, test_types[j], intervention_probability(net, adapted, cfg, test_types[j], tr.split(2))});
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (curve_every > 0 && epoch % curve_every == 0) record_curve(epoch);
    const Rng er = root.split(1000 + static_cast<std::uint64_t>(epoch));
    ParamVector g = theta.zeros_like();
    double payoff = 0.0;
    for (std::size_t i = 0; i < types.size(); ++i) {
      const Rng tr = er.split(i);
      const ParamVars leaves = ParamVars::leaves(theta);
      ParamVars adapted = leaves;
      ParamVector adapted_values = theta;
      if (trainer == StackelbergTrainer::Maml) {
        const auto ep = run_stackelberg_episode(net, theta, cfg, types[i], tr.split(1));
        Baseline inner{0.0, false, cfg.baseline_decay};
        const auto adv = stackelberg_advantages({&ep}, cfg.gamma(), inner);
        adapted = ad::sgd_step(leaves, ad::grad_vars(stackelberg_objective(net, leaves, {&ep}, adv), leaves),
                               -cfg.inner_lr);
        adapted_values = adapted.values();
      }
      const auto ep = run_stackelberg_episode(net, adapted_values, cfg, types[i], tr.split(2));
      payoff += env::episode_score(ep.trace, 0.0, 1.0) / static_cast<double>(ep.trace.length());
      const auto adv = stackelberg_advantages({&ep}, cfg.gamma(), baselines[i]);
      g += ad::grad(stackelberg_objective(net, adapted, {&ep}, adv), leaves);
    }
    g *= 1.0 / static_cast<double>(types.size());
    if (!g.all_finite()) throw InvariantError("non-finite Stackelberg gradient at epoch " + std::to_string(epoch));
    adam.step(theta, g * -1.0);
    out.mean_payoff.push_back(payoff / static_cast<double>(types.size()));
  }
  if (curve_every > 0) record_curve(cfg.epochs);
  out.theta = theta;
  return out;
}

/// Fresh initialization adapted with K episodes on the test type only.
inline ParamVector stackelberg_rl_from_scratch(const StackelbergPolicyNet& net,
                                               const StackelbergConfig& cfg, double u, int K,
                                               const Rng& rng) {
  Rng init_rng = rng.split(0xC0FFEE);
  return stackelberg_adapt(net, net.init(init_rng), cfg, u, K, rng.split(1));
}

}  // namespace mermaide::learning
