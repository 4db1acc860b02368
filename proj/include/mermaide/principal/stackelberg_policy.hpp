// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/diffcore/nn.hpp"

namespace mermaide::principal {

/// MLP from the observed agent type to the probability of intervening.
struct StackelbergPolicyNet {
  int hidden = 32;

  ad::Mlp mlp() const { return {"sb", 1, hidden, 1}; }

  ad::ParamVector init(Rng& rng) const {
    ad::ParamVector p;
    mlp().init(p, rng);
    return p;
  }

  /// Pre-sigmoid logits for a row of observations (1 x N).
  ad::Var logits(const ad::ParamVars& p, const ad::Matrix& u_obs) const {
    return mlp()(p, ad::Var::constant(u_obs));
  }

  double probability(const ad::ParamVector& params, double u_obs) const {
    ad::NoGradGuard no_grad;
    const double z = logits(ad::ParamVars::constants(params), ad::Matrix::Constant(1, 1, u_obs)).item();
    return 1.0 / (1.0 + std::exp(-z));
  }
};

struct StackelbergDecision {
  bool intervene = false;
  double logprob = 0.0;
  double probability = 0.5;
};

/// Bernoulli draw from the policy; log-probabilities use log-sigmoid.
inline StackelbergDecision stackelberg_act(const StackelbergPolicyNet& net,
                                           const ad::ParamVector& params, double u_obs, Rng& rng) {
  ad::NoGradGuard no_grad;
  const double z =
      net.logits(ad::ParamVars::constants(params), ad::Matrix::Constant(1, 1, u_obs)).item();
  StackelbergDecision d;
  d.probability = 1.0 / (1.0 + std::exp(-z));
  d.intervene = rng.bernoulli(d.probability);
  // log sigmoid(+-z), computed stably.
  const double s = d.intervene ? z : -z;
  d.logprob = -(std::max(-s, 0.0) + std::log1p(std::exp(-std::abs(s))));
  return d;
}

/// sum_i weights_i * log pi(action_i | u_obs_i); all arguments are 1 x N.
inline ad::Var stackelberg_weighted_log_prob(const StackelbergPolicyNet& net,
                                             const ad::ParamVars& p, const ad::Matrix& u_obs,
                                             const std::vector<int>& intervened,
                                             const ad::Matrix& weights) {
  const Eigen::Index n = u_obs.cols();
  if (static_cast<Eigen::Index>(intervened.size()) != n || weights.cols() != n)
    throw UsageError("stackelberg_weighted_log_prob: length mismatch");
  ad::Matrix w_in = ad::Matrix::Zero(1, n), w_out = ad::Matrix::Zero(1, n);
  for (Eigen::Index i = 0; i < n; ++i)
    (intervened[static_cast<std::size_t>(i)] ? w_in : w_out)(0, i) = weights(0, i);
  const ad::Var z = net.logits(p, u_obs);
  return ad::add(ad::sum_all(ad::mul(ad::log_sigmoid(z), ad::Var::constant(w_in))),
                 ad::sum_all(ad::mul(ad::log_sigmoid(ad::neg(z)), ad::Var::constant(w_out))));
}

}  // namespace mermaide::principal
