// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "mermaide/core/error.hpp"
#include "mermaide/diffcore/graph.hpp"
#include "mermaide/diffcore/params.hpp"

namespace mermaide::ad {

/// p - lr * g
inline ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr) {
  params.require_compatible(grads, "sgd_step");
  ParamVector out = params;
  out.axpy(-lr, grads);
  if (!out.all_finite()) throw InvariantError("sgd_step produced non-finite parameters");
  return out;
}

/// Differentiable SGD step used inside MAML's inner loop.
inline ParamVars sgd_step(const ParamVars& params, const ParamVars& grads, double lr) {
  ParamVars out;
  for (const auto& [k, v] : params) out.set(k, lr == 0.0 ? v : sub(v, scale(grads[k], lr)));
  return out;
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamVector m;
  ParamVector v;
  long step = 0;

  static AdamState for_params(const ParamVector& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// Bias-corrected Adam update. Pure: returns the new parameters and moments.
inline std::pair<ParamVector, AdamState> adam_step(const AdamState& state,
                                                   const ParamVector& params,
                                                   const ParamVector& grads,
                                                   const AdamOptions& opt = {}) {
  params.require_compatible(grads, "adam_step");
  params.require_compatible(state.m, "adam_step (first moment)");
  params.require_compatible(state.v, "adam_step (second moment)");
  AdamState next = state;
  next.step += 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(next.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(next.step));
  ParamVector out = params;
  auto g = grads.begin();
  auto m = next.m.begin();
  auto v = next.v.begin();
  for (auto& [k, p] : out) {
    const Matrix& gm = g->second;
    m->second = opt.beta1 * m->second + (1.0 - opt.beta1) * gm;
    v->second = opt.beta2 * v->second + (1.0 - opt.beta2) * gm.cwiseProduct(gm);
    p.array() -= opt.lr * (m->second.array() / c1) /
                 ((v->second.array() / c2).sqrt() + opt.eps);
    ++g, ++m, ++v;
  }
  if (!out.all_finite()) throw InvariantError("adam_step produced non-finite parameters");
  return {std::move(out), std::move(next)};
}

/// Stateful convenience wrapper around adam_step.
class Adam {
 public:
  Adam(const ParamVector& like, AdamOptions opt) : opt_(opt), state_(AdamState::for_params(like)) {}
  void step(ParamVector& params, const ParamVector& grads) {
    auto [p, s] = adam_step(state_, params, grads, opt_);
    params = std::move(p);
    state_ = std::move(s);
  }
  const AdamState& state() const { return state_; }
  void set_state(AdamState s) { state_ = std::move(s); }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  AdamState state_;
};

using LossBuilder = std::function<Var(const ParamVars&)>;

struct MamlOptions {
  double inner_lr = 0.0;
  int inner_steps = 1;
  /// Drop the second-order term (first-order MAML).
  bool first_order = false;
};

/// d/dθ L_outer(θ') with θ' obtained from `inner_steps` differentiable SGD
/// steps on L_inner starting at θ. With the full second-order term this is
/// (I - lr ∇²L_inner) ∇L_outer(θ') for one step.
inline ParamVector grad_of_grad(const LossBuilder& inner_loss, const LossBuilder& outer_loss,
                                const ParamVector& theta, const MamlOptions& opt) {
  if (opt.first_order) {
    ParamVector adapted = theta;
    for (int k = 0; k < opt.inner_steps; ++k) {
      const ParamVars vars = ParamVars::leaves(adapted);
      adapted = sgd_step(adapted, grad(inner_loss(vars), vars), opt.inner_lr);
    }
    const ParamVars vars = ParamVars::leaves(adapted);
    return grad(outer_loss(vars), vars);
  }
  const ParamVars leaves = ParamVars::leaves(theta);
  ParamVars current = leaves;
  for (int k = 0; k < opt.inner_steps && opt.inner_lr != 0.0; ++k)
    current = sgd_step(current, grad_vars(inner_loss(current), current), opt.inner_lr);
  return grad(outer_loss(current), leaves);
}

}  // namespace mermaide::ad
