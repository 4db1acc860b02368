// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/diffcore/nn.hpp"
#include "mermaide/env/bandit.hpp"

namespace mermaide::principal {

using ad::Matrix;
using ad::ParamVector;
using ad::ParamVars;
using ad::Var;

inline constexpr int kDefaultHidden = 128;
inline constexpr int kDefaultLayers = 2;

/// Writes one-hot(index) into rows [offset, offset+size) of column `col`.
inline void put_one_hot(Matrix& m, Eigen::Index col, int offset, int index, int size) {
  if (index < 0) return;
  if (index >= size) throw ConfigError("one-hot index out of range");
  m(offset + index, col) = 1.0;
}

/// Recurrent next-action predictor over [one-hot a_{t-1}, one-hot level_{t-1}].
struct WorldModelNet {
  int num_arms = 10;
  int hidden = kDefaultHidden;
  int layers = kDefaultLayers;

  int input_dim() const { return num_arms + env::kNumInterventionLevels; }
  ad::GruStack gru() const { return {"wm.gru", input_dim(), hidden, layers}; }
  ad::Linear head() const { return {"wm.head", hidden, num_arms}; }

  /// Uniform GRU init; zero head so the first predictions are uniform.
  ParamVector init(Rng& rng) const {
    ParamVector p;
    gru().init(p, rng);
    head().init(p, rng, true);
    return p;
  }

  void encode(Matrix& x, Eigen::Index col, int a_prev, int level_prev) const {
    put_one_hot(x, col, 0, a_prev, num_arms);
    put_one_hot(x, col, num_arms, level_prev, env::kNumInterventionLevels);
  }
};

/// What the intervention policy conditions on besides its own hidden state.
enum class Conditioning {
  Full,            // a_{t-1}, level_{t-1}, predicted a_t
  ModelFree,       // a_{t-1}, level_{t-1}
  WorldModelOnly,  // predicted a_t
  Oracle,          // a_{t-1}, level_{t-1}, true a_t
};

inline const char* to_string(Conditioning c) {
  switch (c) {
    case Conditioning::Full: return "full";
    case Conditioning::ModelFree: return "model_free";
    case Conditioning::WorldModelOnly: return "world_model_only";
    case Conditioning::Oracle: return "oracle";
  }
  return "?";
}

inline bool uses_history(Conditioning c) { return c != Conditioning::WorldModelOnly; }
inline bool uses_prediction(Conditioning c) {
  return c == Conditioning::Full || c == Conditioning::WorldModelOnly;
}
inline bool uses_true_action(Conditioning c) { return c == Conditioning::Oracle; }
inline bool uses_world_model(Conditioning c) { return uses_prediction(c); }

/// Recurrent intervention policy with a softmax head over the three levels.
struct PolicyNet {
  int num_arms = 10;
  Conditioning conditioning = Conditioning::Full;
  int hidden = kDefaultHidden;
  int layers = kDefaultLayers;

  int input_dim() const {
    int d = 0;
    if (uses_history(conditioning)) d += num_arms + env::kNumInterventionLevels;
    if (uses_prediction(conditioning) || uses_true_action(conditioning)) d += num_arms;
    return d;
  }
  ad::GruStack gru() const { return {"pi.gru", input_dim(), hidden, layers}; }
  ad::Linear head() const { return {"pi.head", hidden, env::kNumInterventionLevels}; }

  ParamVector init(Rng& rng) const {
    ParamVector p;
    gru().init(p, rng);
    head().init(p, rng, true);
    return p;
  }

  /// `a_now` is the predicted or the true current agent action.
  void encode(Matrix& x, Eigen::Index col, int a_prev, int level_prev, int a_now) const {
    int offset = 0;
    if (uses_history(conditioning)) {
      put_one_hot(x, col, 0, a_prev, num_arms);
      put_one_hot(x, col, num_arms, level_prev, env::kNumInterventionLevels);
      offset = num_arms + env::kNumInterventionLevels;
    }
    if (uses_prediction(conditioning) || uses_true_action(conditioning))
      put_one_hot(x, col, offset, a_now, num_arms);
  }
};

/// Runs a GRU-plus-softmax network one step at a time without recording.
class RecurrentRunner {
 public:
  RecurrentRunner(ad::GruStack gru, ad::Linear head, const ParamVector& params)
      : gru_(std::move(gru)), head_(std::move(head)), vars_(ParamVars::constants(params)) {
    reset();
  }

  void reset() { h_ = gru_.zero_state(1); }

  /// Advances on input column x and returns the head's log-probabilities.
  Matrix step(const Matrix& x) {
    ad::NoGradGuard no_grad;
    h_ = gru_.step(vars_, Var::constant(x), h_);
    return ad::log_softmax(head_(vars_, h_.back())).value();
  }

 private:
  ad::GruStack gru_;
  ad::Linear head_;
  ParamVars vars_;
  std::vector<Var> h_;
};

/// Log-probabilities of a GRU-plus-softmax network over a batch of equal
/// length input sequences. inputs[t] is input_dim x batch; returns the
/// per-step log-probability matrices (classes x batch), one per t.
inline Var sequence_log_probs(const ad::GruStack& gru, const ad::Linear& head, const ParamVars& p,
                              const std::vector<Matrix>& inputs) {
  if (inputs.empty()) throw ConfigError("empty input sequence");
  const Eigen::Index batch = inputs.front().cols();
  auto h = gru.zero_state(batch);
  std::vector<Var> tops;
  tops.reserve(inputs.size());
  for (const auto& x : inputs) {
    h = gru.step(p, Var::constant(x), h);
    tops.push_back(h.back());
  }
  // One head product over all steps: classes x (T * batch), step-major.
  return ad::log_softmax(head(p, ad::hcat(tops)));
}

/// sum_{t,b} weights(c, t*batch + b) * logp(c, t*batch + b)
inline Var weighted_log_prob_sum(const Var& log_probs, const Matrix& weights) {
  return ad::sum_all(ad::mul(log_probs, Var::constant(weights)));
}

}  // namespace mermaide::principal
