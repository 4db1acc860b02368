// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/diffcore/optim.hpp"
#include "mermaide/env/trace.hpp"
#include "mermaide/principal/networks.hpp"

namespace mermaide::learning {

/// Mean (over episodes) of the summed next-action negative log-likelihood
/// -sum_t log pi_w(a_t | a_{<t}, level_{<t}).
inline ad::Var wm_nll(const principal::WorldModelNet& net, const ad::ParamVars& p,
                      const std::vector<const env::EpisodeTrace*>& episodes) {
  if (episodes.empty()) throw UsageError("wm_nll: empty dataset");
  const auto E = static_cast<Eigen::Index>(episodes.size());
  const auto T = static_cast<Eigen::Index>(episodes.front()->length());
  for (const auto* ep : episodes)
    if (static_cast<Eigen::Index>(ep->length()) != T)
      throw UsageError("wm_nll: episodes in a batch must share one length");
  std::vector<ad::Matrix> inputs(static_cast<std::size_t>(T), ad::Matrix::Zero(net.input_dim(), E));
  ad::Matrix targets = ad::Matrix::Zero(net.num_arms, T * E);
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto& steps = episodes[static_cast<std::size_t>(e)]->steps;
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& s = steps[static_cast<std::size_t>(t)];
      if (t > 0) {
        const auto& prev = steps[static_cast<std::size_t>(t - 1)];
        net.encode(inputs[static_cast<std::size_t>(t)], e, prev.agent_action,
                   env::level_index(prev.intervention));
      }
      if (s.agent_action < 0 || s.agent_action >= net.num_arms)
        throw UsageError("wm_nll: agent action out of range");
      targets(s.agent_action, t * E + e) = -1.0 / static_cast<double>(E);
    }
  }
  return principal::weighted_log_prob_sum(
      principal::sequence_log_probs(net.gru(), net.head(), p, inputs), targets);
}

inline double wm_nll_value(const principal::WorldModelNet& net, const ad::ParamVector& params,
                           const std::vector<const env::EpisodeTrace*>& episodes) {
  ad::NoGradGuard no_grad;
  return wm_nll(net, ad::ParamVars::constants(params), episodes).item();
}

/// Fraction of steps t >= from_step (1-based) where the argmax prediction
/// matches the agent's action.
inline double wm_accuracy(const principal::WorldModelNet& net, const ad::ParamVector& params,
                          const std::vector<const env::EpisodeTrace*>& episodes, int from_step = 1) {
  ad::NoGradGuard no_grad;
  std::size_t hits = 0, total = 0;
  for (const auto* ep : episodes) {
    principal::RecurrentRunner runner(net.gru(), net.head(), params);
    int a_prev = -1, l_prev = -1;
    for (const auto& s : ep->steps) {
      ad::Matrix x = ad::Matrix::Zero(net.input_dim(), 1);
      net.encode(x, 0, a_prev, l_prev);
      const ad::Matrix lp = runner.step(x);
      Eigen::Index best = 0;
      lp.col(0).maxCoeff(&best);
      if (s.t >= from_step) {
        hits += best == s.agent_action ? 1 : 0;
        ++total;
      }
      a_prev = s.agent_action;
      l_prev = env::level_index(s.intervention);
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

/// World model, its Adam state and the replay buffer of observed episodes.
class WorldModelTrainer {
 public:
  WorldModelTrainer(principal::WorldModelNet net, ad::ParamVector params, double lr,
                    std::size_t capacity = 10000)
      : net_(net), params_(std::move(params)), adam_(params_, {lr}), capacity_(capacity) {}

  void add(env::EpisodeTrace trace) {
    buffer_.push_back(std::move(trace));
    while (buffer_.size() > capacity_) buffer_.pop_front();
  }

  /// One Adam step on a minibatch drawn without replacement from the buffer.
  /// Returns the minibatch NLL before the step.
  double step(std::size_t batch_size, Rng& rng) {
    if (buffer_.empty()) throw UsageError("world model buffer is empty");
    std::vector<std::size_t> idx(buffer_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    idx.resize(std::min(batch_size, idx.size()));
    std::sort(idx.begin(), idx.end());
    std::vector<const env::EpisodeTrace*> batch;
    for (auto i : idx) batch.push_back(&buffer_[i]);
    return step_on(batch);
  }

  double step_on(const std::vector<const env::EpisodeTrace*>& batch) {
    const auto vars = ad::ParamVars::leaves(params_);
    const ad::Var loss = wm_nll(net_, vars, batch);
    const auto g = ad::grad(loss, vars);
    if (!g.all_finite()) throw InvariantError("non-finite world-model gradient");
    adam_.step(params_, g);
    return loss.item();
  }

  const ad::ParamVector& params() const { return params_; }
  void set_params(ad::ParamVector p) { params_ = std::move(p); }
  const ad::AdamState& adam_state() const { return adam_.state(); }
  void set_adam_state(ad::AdamState s) { adam_.set_state(std::move(s)); }
  const principal::WorldModelNet& net() const { return net_; }
  std::size_t buffer_size() const { return buffer_.size(); }
  const std::deque<env::EpisodeTrace>& buffer() const { return buffer_; }

 private:
  principal::WorldModelNet net_;
  ad::ParamVector params_;
  ad::Adam adam_;
  std::size_t capacity_;
  std::deque<env::EpisodeTrace> buffer_;
};

struct WmTrainResult {
  ad::ParamVector params;
  double nll = 0.0;  // dataset NLL per episode after training
};

/// Minibatch Adam on the next-action log-likelihood for `epochs` passes.
inline WmTrainResult train_world_model(const principal::WorldModelNet& net,
                                       const ad::ParamVector& omega,
                                       const std::vector<env::EpisodeTrace>& dataset, int epochs,
                                       double lr, std::size_t batch_size, Rng& rng) {
  if (dataset.empty()) throw ConfigError("train_world_model: empty dataset");
  std::vector<const env::EpisodeTrace*> all;
  for (const auto& ep : dataset) all.push_back(&ep);
  if (lr == 0.0) return {omega, wm_nll_value(net, omega, all)};
  WorldModelTrainer trainer(net, omega, lr, dataset.size());
  for (const auto& ep : dataset) trainer.add(ep);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<std::size_t> chunk(order.begin() + static_cast<long>(start),
                                     order.begin() + static_cast<long>(std::min(order.size(), start + batch_size)));
      std::sort(chunk.begin(), chunk.end());
      std::vector<const env::EpisodeTrace*> batch;
      for (auto i : chunk) batch.push_back(&dataset[i]);
      trainer.step_on(batch);
    }
  }
  return {trainer.params(), wm_nll_value(net, trainer.params(), all)};
}

}  // namespace mermaide::learning
