// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/diffcore/optim.hpp"
#include "mermaide/env/trace.hpp"
#include "mermaide/principal/bandit_principal.hpp"

namespace mermaide::learning {

using ad::Matrix;
using ad::ParamVector;
using ad::ParamVars;
using ad::Var;

inline constexpr double kDefaultBaselineDecay = 0.9;

/// Scalar moving average of the per-step cost-adjusted reward. The baseline
/// for a return-to-go G_t is this value times the discounted number of
/// remaining steps. An uninitialized baseline takes the mean of the first
/// batch it sees.
struct Baseline {
  double value = 0.0;
  bool initialized = false;
  double decay = kDefaultBaselineDecay;

  void prime(double per_step_mean) {
    if (!initialized) value = per_step_mean, initialized = true;
  }
  void update(double per_step_mean) {
    if (!initialized) {
      prime(per_step_mean);
      return;
    }
    value = decay * value + (1.0 - decay) * per_step_mean;
  }
};

/// Mean per-step cost-adjusted reward over a batch of traces.
inline double mean_step_reward(const std::vector<const env::EpisodeTrace*>& traces, double alpha) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto* tr : traces) {
    total += env::episode_score(*tr, alpha, 1.0);
    n += tr->length();
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

/// A_t = G_t - b * sum_{k=t}^{T} gamma^(k-t)
inline std::vector<double> advantages(const env::EpisodeTrace& trace, double alpha, double gamma,
                                      double baseline) {
  auto g = env::returns_to_go(trace, alpha, gamma);
  double remaining = 0.0;
  for (std::size_t i = g.size(); i-- > 0;) {
    remaining = 1.0 + gamma * remaining;
    g[i] -= baseline * remaining;
  }
  return g;
}

/// Computes advantages for a batch with the baseline's value before this
/// batch (priming it first if needed), then folds the batch into it.
inline std::vector<std::vector<double>> batch_advantages(
    const std::vector<const env::EpisodeTrace*>& traces, double alpha, double gamma,
    Baseline& baseline) {
  const double m = mean_step_reward(traces, alpha);
  baseline.prime(m);
  std::vector<std::vector<double>> out;
  out.reserve(traces.size());
  for (const auto* tr : traces) out.push_back(advantages(*tr, alpha, gamma, baseline.value));
  baseline.update(m);
  return out;
}

/// J = (1/E) sum_e sum_t A_{e,t} log pi(level_{e,t} | inputs_{e,<=t}) with
/// log-probabilities recomputed from the recorded inputs.
inline Var policy_objective(const principal::PolicyNet& net, const ParamVars& p,
                            const std::vector<const principal::RecordedEpisode*>& episodes,
                            const std::vector<std::vector<double>>& adv) {
  if (episodes.empty()) throw UsageError("policy_objective: no episodes");
  if (adv.size() != episodes.size()) throw UsageError("policy_objective: advantage count mismatch");
  const auto E = static_cast<Eigen::Index>(episodes.size());
  const Eigen::Index T = episodes.front()->policy.inputs.cols();
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& rec = episodes[e]->policy;
    if (rec.inputs.rows() != net.input_dim())
      throw UsageError("policy_objective: inputs do not match the policy's input size");
    if (rec.inputs.cols() != T || static_cast<Eigen::Index>(rec.levels.size()) != T ||
        static_cast<Eigen::Index>(adv[e].size()) != T)
      throw UsageError("policy_objective: episodes must share one length");
  }
  std::vector<Matrix> inputs(static_cast<std::size_t>(T), Matrix(net.input_dim(), E));
  Matrix weights = Matrix::Zero(env::kNumInterventionLevels, T * E);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index e = 0; e < E; ++e) {
      const auto& rec = episodes[static_cast<std::size_t>(e)]->policy;
      inputs[static_cast<std::size_t>(t)].col(e) = rec.inputs.col(t);
      weights(rec.levels[static_cast<std::size_t>(t)], t * E + e) =
          adv[static_cast<std::size_t>(e)][static_cast<std::size_t>(t)] / static_cast<double>(E);
    }
  return principal::weighted_log_prob_sum(
      principal::sequence_log_probs(net.gru(), net.head(), p, inputs), weights);
}

/// Per-step log-probabilities of the recorded levels (T x E, column per episode).
inline Matrix recomputed_log_probs(const principal::PolicyNet& net, const ParamVector& theta,
                                   const std::vector<const principal::RecordedEpisode*>& episodes) {
  ad::NoGradGuard no_grad;
  const auto E = static_cast<Eigen::Index>(episodes.size());
  const Eigen::Index T = episodes.front()->policy.inputs.cols();
  std::vector<Matrix> inputs(static_cast<std::size_t>(T), Matrix(net.input_dim(), E));
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index e = 0; e < E; ++e)
      inputs[static_cast<std::size_t>(t)].col(e) = episodes[static_cast<std::size_t>(e)]->policy.inputs.col(t);
  const Matrix lp =
      principal::sequence_log_probs(net.gru(), net.head(), ParamVars::constants(theta), inputs).value();
  Matrix out(T, E);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index e = 0; e < E; ++e)
      out(t, e) = lp(episodes[static_cast<std::size_t>(e)]->policy.levels[static_cast<std::size_t>(t)],
                     t * E + e);
  return out;
}

/// theta' = theta + lr * grad_theta J (one REINFORCE ascent step).
inline ParamVector reinforce_update(const principal::PolicyNet& net, const ParamVector& theta,
                                    const std::vector<const principal::RecordedEpisode*>& episodes,
                                    double lr, double alpha, double gamma, Baseline& baseline) {
  std::vector<const env::EpisodeTrace*> traces;
  for (const auto* e : episodes) traces.push_back(&e->trace);
  const auto adv = batch_advantages(traces, alpha, gamma, baseline);
  const auto vars = ParamVars::leaves(theta);
  const auto g = ad::grad(policy_objective(net, vars, episodes, adv), vars);
  return ad::sgd_step(theta, g, -lr);
}

}  // namespace mermaide::learning
