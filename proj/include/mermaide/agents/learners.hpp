// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"

namespace mermaide::agents {

enum class Algorithm { Ucb, EpsGreedy, Exp3, BestResponseSingleRound, BestResponseRunningAverage };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Ucb: return "ucb";
    case Algorithm::EpsGreedy: return "eps_greedy";
    case Algorithm::Exp3: return "exp3";
    case Algorithm::BestResponseSingleRound: return "best_response";
    case Algorithm::BestResponseRunningAverage: return "running_average";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "ucb" || s == "UCB") return Algorithm::Ucb;
  if (s == "eps_greedy" || s == "epsilon_greedy" || s == "EpsGreedy") return Algorithm::EpsGreedy;
  if (s == "exp3" || s == "EXP3") return Algorithm::Exp3;
  if (s == "best_response" || s == "BestResponseSingleRound") return Algorithm::BestResponseSingleRound;
  if (s == "running_average" || s == "BestResponseRunningAverage")
    return Algorithm::BestResponseRunningAverage;
  throw ConfigError("unknown learner algorithm '" + s + "'");
}

/// Default scale inside the UCB square root: beta * sqrt(scale * ln t / n_a).
/// Fitted so the beta grid's exploration frequencies on generated tasks match
/// the reference counts and the paired eps-greedy columns; 1 gives the bare
/// sqrt(ln t / n_a) bonus.
inline constexpr double kDefaultUcbConfidenceScale = 0.6;
inline constexpr double kDefaultExp3Mixing = 0.1;

/// Which learner an agent runs and its exploration knob: beta for UCB,
/// epsilon for eps-greedy, mixing weight w for EXP3.
struct LearnerSpec {
  Algorithm algorithm = Algorithm::Ucb;
  double exploration = 0.17;
  double ucb_confidence_scale = kDefaultUcbConfidenceScale;

  void validate() const {
    switch (algorithm) {
      case Algorithm::Ucb:
        if (!(exploration > 0.0)) throw ConfigError("UCB beta must be > 0");
        if (!(ucb_confidence_scale > 0.0)) throw ConfigError("UCB confidence scale must be > 0");
        break;
      case Algorithm::EpsGreedy:
        if (!(exploration >= 0.0 && exploration <= 1.0))
          throw ConfigError("eps-greedy epsilon must lie in [0,1]");
        break;
      case Algorithm::Exp3:
        if (!(exploration > 0.0 && exploration <= 1.0))
          throw ConfigError("EXP3 mixing weight must lie in (0,1]");
        break;
      default:
        break;
    }
  }

  /// Short stable label, e.g. "ucb_0.17".
  std::string label() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%g", to_string(algorithm), exploration);
    return buf;
  }

  friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;
};

/// Plain-value learner state for the bandit algorithms.
struct LearnerState {
  std::vector<int> counts;      // n_a
  std::vector<double> means;    // running mean of experienced reward per arm
  std::vector<double> weights;  // EXP3 cumulative importance-weighted sums S_a
  std::vector<double> last_probs;  // EXP3 distribution used at the last selection
  long t = 0;                   // number of updates received

  static LearnerState fresh(int num_arms) {
    if (num_arms < 1) throw ConfigError("learner needs at least one arm");
    const auto n = static_cast<std::size_t>(num_arms);
    return {std::vector<int>(n, 0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
            {}, 0};
  }
  int num_arms() const { return static_cast<int>(counts.size()); }

  friend bool operator==(const LearnerState&, const LearnerState&) = default;
};

namespace detail {
inline int first_unpulled(const LearnerState& s) {
  for (int a = 0; a < s.num_arms(); ++a)
    if (s.counts[static_cast<std::size_t>(a)] == 0) return a;
  return -1;
}
inline int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(v.size()); ++a)
    if (v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(best)]) best = a;
  return best;
}
inline void require_arms(const LearnerState& s) {
  if (s.num_arms() == 0) throw ConfigError("empty action set");
}
}  // namespace detail

/// UCB index of one arm at step t (1-based).
inline double ucb_index(double mean, int count, long t, double beta,
                        double confidence_scale = kDefaultUcbConfidenceScale) {
  return mean + beta * std::sqrt(confidence_scale * std::log(static_cast<double>(t)) / count);
}

/// Lowest-indexed unpulled arm if any, otherwise the argmax of the UCB index
/// (ties to the lowest index).
inline int ucb_select(const LearnerState& s, double beta,
                      double confidence_scale = kDefaultUcbConfidenceScale) {
  detail::require_arms(s);
  if (int a = detail::first_unpulled(s); a >= 0) return a;
  const long t = s.t + 1;
  int best = 0;
  double best_v = ucb_index(s.means[0], s.counts[0], t, beta, confidence_scale);
  for (int a = 1; a < s.num_arms(); ++a) {
    const auto i = static_cast<std::size_t>(a);
    const double v = ucb_index(s.means[i], s.counts[i], t, beta, confidence_scale);
    if (v > best_v) best = a, best_v = v;
  }
  return best;
}

/// Incremental-mean update shared by UCB and eps-greedy.
inline LearnerState mean_update(LearnerState s, int a, double r) {
  if (a < 0 || a >= s.num_arms()) throw ConfigError("action index out of range");
  const auto i = static_cast<std::size_t>(a);
  s.counts[i] += 1;
  s.means[i] += (r - s.means[i]) / s.counts[i];
  s.t += 1;
  return s;
}
inline LearnerState ucb_update(LearnerState s, int a, double r) { return mean_update(std::move(s), a, r); }

/// Pulls every arm once in index order, then exploits the best running mean
/// with probability 1-eps and picks a uniform arm otherwise. Draws no random
/// numbers during the initial sweep.
inline int eps_greedy_select(const LearnerState& s, double eps, Rng& rng) {
  detail::require_arms(s);
  if (int a = detail::first_unpulled(s); a >= 0) return a;
  if (rng.uniform() < eps) return rng.index(s.num_arms());
  return detail::argmax_lowest(s.means);
}
inline LearnerState eps_greedy_update(LearnerState s, int a, double r) {
  return mean_update(std::move(s), a, r);
}

/// pi(a) = w/|A| + (1-w) * softmax(S)_a, computed with max subtraction.
inline std::vector<double> exp3_probabilities(const LearnerState& s, double w) {
  detail::require_arms(s);
  const double k = s.num_arms();
  const double m = *std::max_element(s.weights.begin(), s.weights.end());
  std::vector<double> p(s.weights.size());
  double z = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) z += (p[a] = std::exp(s.weights[a] - m));
  for (auto& v : p) v = w / k + (1.0 - w) * v / z;
  return p;
}

/// Samples an arm and records the distribution it was drawn from.
inline int exp3_select(LearnerState& s, double w, Rng& rng) {
  s.last_probs = exp3_probabilities(s, w);
  return rng.categorical(s.last_probs);
}

/// S_a += r / pi_a for the pulled arm only.
inline LearnerState exp3_update(LearnerState s, int a, double r, double prob) {
  if (a < 0 || a >= s.num_arms()) throw ConfigError("action index out of range");
  if (!(prob > 0.0)) throw InvariantError("EXP3 update with non-positive selection probability");
  const auto i = static_cast<std::size_t>(a);
  s.weights[i] += r / prob;
  s.counts[i] += 1;
  s.t += 1;
  return s;
}

/// A bandit learner: spec plus evolving state, reset between episodes.
class BanditLearner {
 public:
  BanditLearner(LearnerSpec spec, int num_arms)
      : spec_(spec), state_(LearnerState::fresh(num_arms)) {
    spec_.validate();
    if (spec_.algorithm == Algorithm::BestResponseSingleRound ||
        spec_.algorithm == Algorithm::BestResponseRunningAverage)
      throw ConfigError("Stackelberg best-responders are not bandit learners");
  }

  int select(Rng& rng) {
    switch (spec_.algorithm) {
      case Algorithm::Ucb: return ucb_select(state_, spec_.exploration, spec_.ucb_confidence_scale);
      case Algorithm::EpsGreedy: return eps_greedy_select(state_, spec_.exploration, rng);
      case Algorithm::Exp3: return exp3_select(state_, spec_.exploration, rng);
      default: throw ConfigError("not a bandit learner");
    }
  }

  void update(int a, double r) {
    if (spec_.algorithm == Algorithm::Exp3) {
      if (state_.last_probs.empty()) throw UsageError("EXP3 update before select");
      const double p = state_.last_probs.at(static_cast<std::size_t>(a));
      state_ = exp3_update(std::move(state_), a, r, p);
    } else {
      state_ = mean_update(std::move(state_), a, r);
    }
  }

  void reset() { state_ = LearnerState::fresh(state_.num_arms()); }
  const LearnerSpec& spec() const { return spec_; }
  const LearnerState& state() const { return state_; }

 private:
  LearnerSpec spec_;
  LearnerState state_;
};

}  // namespace mermaide::agents
