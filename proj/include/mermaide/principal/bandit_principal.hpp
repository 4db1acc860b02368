// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/env/bandit.hpp"
#include "mermaide/env/trace.hpp"
#include "mermaide/principal/networks.hpp"
#include "mermaide/principal/rules.hpp"

namespace mermaide::principal {

struct Decision {
  int level = 0;  // index into env::kInterventionLevels
  double logprob = 0.0;
  int wm_prediction = -1;
};

/// A bandit principal. `decide` is called once per step before the agent's
/// reward is drawn; oracle principals receive the agent's action for that
/// step, others receive -1.
class BanditPrincipal {
 public:
  virtual ~BanditPrincipal() = default;
  virtual std::string name() const = 0;
  virtual bool uses_oracle() const { return false; }
  virtual void begin_episode(const env::BanditTask&) {}
  virtual Decision decide(int t, int a_true, Rng& rng) = 0;
  virtual void observe(int /*agent_action*/, int /*level*/) {}
};

class NoInterventionPrincipal final : public BanditPrincipal {
 public:
  std::string name() const override { return "NoIntervention"; }
  Decision decide(int, int, Rng&) override { return {}; }
};

/// S1 (every tenth step) or S2 (first twenty steps) at a fixed level.
class ScheduledPrincipal final : public BanditPrincipal {
 public:
  enum class Schedule { S1, S2 };
  ScheduledPrincipal(Schedule s, double level) : schedule_(s), level_(env::level_index(level)) {}
  std::string name() const override { return schedule_ == Schedule::S1 ? "S1" : "S2"; }
  Decision decide(int t, int, Rng&) override {
    const double l = env::kInterventionLevels[static_cast<std::size_t>(level_)];
    return {env::level_index(schedule_ == Schedule::S1 ? rule_s1(t, l) : rule_s2(t, l)), 0.0, -1};
  }

 private:
  Schedule schedule_;
  int level_;
};

/// Intervenes at a fixed level whenever the agent is about to miss a*.
class RuleBasedPrincipal final : public BanditPrincipal {
 public:
  explicit RuleBasedPrincipal(double level) : level_(level) { env::level_index(level); }
  std::string name() const override { return "RB"; }
  bool uses_oracle() const override { return true; }
  void begin_episode(const env::BanditTask& task) override { a_star_ = task.a_star; }
  Decision decide(int, int a_true, Rng&) override {
    if (a_true < 0) throw UsageError("RB principal needs the agent's action");
    return {env::level_index(rule_rb(a_true, a_star_, level_)), 0.0, -1};
  }

 private:
  double level_;
  int a_star_ = 0;
};

/// Inputs and sampled levels of one recurrent-policy episode, kept for
/// recomputing log-probabilities with gradients.
struct PolicyRecord {
  Matrix inputs;            // input_dim x T
  std::vector<int> levels;  // sampled level index per step
};

struct RecordedEpisode {
  env::EpisodeTrace trace;
  PolicyRecord policy;
};

/// World-model prediction for one step.
struct WmPrediction {
  std::vector<double> dist;
  int argmax = 0;
};

/// Streams world-model predictions through an episode.
class WorldModelRunner {
 public:
  WorldModelRunner(const WorldModelNet& net, const ParamVector& params)
      : net_(net), runner_(net.gru(), net.head(), params) {}

  void reset() { runner_.reset(); }

  /// Consumes (a_{t-1}, level_{t-1}); -1 encodes "none" at t = 1.
  WmPrediction predict(int a_prev, int level_prev) {
    Matrix x = Matrix::Zero(net_.input_dim(), 1);
    net_.encode(x, 0, a_prev, level_prev);
    const Matrix lp = runner_.step(x);
    WmPrediction out;
    out.dist.resize(static_cast<std::size_t>(net_.num_arms));
    for (int a = 0; a < net_.num_arms; ++a) {
      out.dist[static_cast<std::size_t>(a)] = std::exp(lp(a, 0));
      if (lp(a, 0) > lp(out.argmax, 0)) out.argmax = a;
    }
    return out;
  }

 private:
  WorldModelNet net_;
  RecurrentRunner runner_;
};

/// Samples an intervention level from the policy head.
class PolicyRunner {
 public:
  PolicyRunner(const PolicyNet& net, const ParamVector& params)
      : net_(net), runner_(net.gru(), net.head(), params) {}

  void reset() { runner_.reset(); }

  /// Returns (level index, log-probability) and the encoded input column.
  std::pair<int, double> act(int a_prev, int level_prev, int a_now, Rng& rng, Matrix* input_out) {
    Matrix x = Matrix::Zero(net_.input_dim(), 1);
    net_.encode(x, 0, a_prev, level_prev, a_now);
    const Matrix lp = runner_.step(x);
    std::vector<double> probs(env::kNumInterventionLevels);
    for (int k = 0; k < env::kNumInterventionLevels; ++k)
      probs[static_cast<std::size_t>(k)] = std::exp(lp(k, 0));
    const int level = rng.categorical(probs);
    if (input_out) *input_out = std::move(x);
    return {level, lp(level, 0)};
  }

 private:
  PolicyNet net_;
  RecurrentRunner runner_;
};

/// MERMAIDE and its learned baselines: a recurrent policy, optionally fed by
/// a frozen world model (Full, WorldModelOnly) or the true action (Oracle).
class RecurrentPrincipal final : public BanditPrincipal {
 public:
  RecurrentPrincipal(std::string name, PolicyNet net, const ParamVector& theta,
                     std::optional<std::pair<WorldModelNet, ParamVector>> world_model = {})
      : name_(std::move(name)), net_(net), policy_(net, theta) {
    if (uses_world_model(net.conditioning)) {
      if (!world_model) throw ConfigError(name_ + ": conditioning requires a world model");
      wm_.emplace(world_model->first, world_model->second);
    }
  }

  std::string name() const override { return name_; }
  bool uses_oracle() const override { return uses_true_action(net_.conditioning); }

  void begin_episode(const env::BanditTask& task) override {
    if (task.num_arms() != net_.num_arms) throw ConfigError(name_ + ": arm count mismatch");
    policy_.reset();
    if (wm_) wm_->reset();
    a_prev_ = -1;
    level_prev_ = -1;
    inputs_.clear();
    levels_.clear();
  }

  Decision decide(int, int a_true, Rng& rng) override {
    Decision d;
    int a_now = -1;
    if (wm_) {
      d.wm_prediction = wm_->predict(a_prev_, level_prev_).argmax;
      a_now = d.wm_prediction;
    }
    if (uses_true_action(net_.conditioning)) {
      if (a_true < 0) throw UsageError(name_ + ": oracle conditioning needs the agent's action");
      a_now = a_true;
    }
    Matrix x;
    std::tie(d.level, d.logprob) = policy_.act(a_prev_, level_prev_, a_now, rng, &x);
    inputs_.push_back(std::move(x));
    levels_.push_back(d.level);
    return d;
  }

  void observe(int agent_action, int level) override {
    a_prev_ = agent_action;
    level_prev_ = level;
  }

  /// Inputs and levels of the episode just played.
  PolicyRecord record() const {
    PolicyRecord r;
    r.inputs = Matrix(net_.input_dim(), static_cast<Eigen::Index>(inputs_.size()));
    for (std::size_t t = 0; t < inputs_.size(); ++t)
      r.inputs.col(static_cast<Eigen::Index>(t)) = inputs_[t];
    r.levels = levels_;
    return r;
  }

 private:
  std::string name_;
  PolicyNet net_;
  PolicyRunner policy_;
  std::optional<WorldModelRunner> wm_;
  int a_prev_ = -1;
  int level_prev_ = -1;
  std::vector<Matrix> inputs_;
  std::vector<int> levels_;
};

/// Plays one T-step episode against a fresh copy of the task's agent. The
/// agent stream (selection and reward noise) and the principal stream are
/// split from `rng`, so oracle ordering does not perturb the agent.
inline env::EpisodeTrace run_bandit_episode(const env::BanditTask& task,
                                            BanditPrincipal& principal, int horizon,
                                            const Rng& rng) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  Rng agent_rng = rng.split(1);
  Rng principal_rng = rng.split(2);
  agents::BanditLearner learner(task.learner, task.num_arms());
  principal.begin_episode(task);
  env::EpisodeTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(horizon));
  const bool oracle = principal.uses_oracle();
  for (int t = 1; t <= horizon; ++t) {
    const int a_true = oracle ? learner.select(agent_rng) : -1;
    const Decision d = principal.decide(t, a_true, principal_rng);
    const double level = env::kInterventionLevels[static_cast<std::size_t>(d.level)];
    const auto out = oracle ? env::bandit_respond(task, learner, a_true, level, agent_rng)
                            : env::bandit_step(task, learner, level, agent_rng);
    principal.observe(out.agent_action, d.level);
    trace.steps.push_back({t, out.agent_action, level, out.cost, out.agent_reward,
                           out.principal_reward, d.logprob, d.wm_prediction});
  }
  return trace;
}

/// As run_bandit_episode, also returning the policy inputs for training.
inline RecordedEpisode run_recorded_episode(const env::BanditTask& task,
                                            RecurrentPrincipal& principal, int horizon,
                                            const Rng& rng) {
  RecordedEpisode ep;
  ep.trace = run_bandit_episode(task, principal, horizon, rng);
  ep.policy = principal.record();
  return ep;
}

}  // namespace mermaide::principal
