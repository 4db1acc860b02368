// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mermaide/agents/learners.hpp"
#include "mermaide/core/error.hpp"

namespace mermaide::env {

struct StepRecord {
  int t = 0;  // 1-based
  int agent_action = 0;
  double intervention = 0.0;
  double cost = 0.0;
  double agent_reward = 0.0;
  double principal_reward = 0.0;
  double logprob = 0.0;
  int wm_prediction = -1;  // -1: no world model

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;

  std::size_t length() const { return steps.size(); }
  double total_cost() const {
    double c = 0.0;
    for (const auto& s : steps) c += s.cost;
    return c;
  }
  int count_principal_hits() const {
    int n = 0;
    for (const auto& s : steps) n += s.principal_reward > 0.5 ? 1 : 0;
    return n;
  }

  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

/// J = sum_t gamma^(t-1) (r^p_t - alpha c_t)
inline double episode_score(const EpisodeTrace& trace, double alpha, double gamma) {
  double j = 0.0;
  double g = 1.0;
  for (const auto& s : trace.steps) {
    j += g * (s.principal_reward - alpha * s.cost);
    g *= gamma;
  }
  return j;
}

/// Per-step cost-adjusted return-to-go G_t = sum_{k>=t} gamma^(k-t) (r^p_k - alpha c_k).
inline std::vector<double> returns_to_go(const EpisodeTrace& trace, double alpha, double gamma) {
  std::vector<double> g(trace.steps.size());
  double acc = 0.0;
  for (std::size_t i = trace.steps.size(); i-- > 0;) {
    acc = trace.steps[i].principal_reward - alpha * trace.steps[i].cost + gamma * acc;
    g[i] = acc;
  }
  return g;
}

inline constexpr const char* kTraceCsvHeader =
    "t,agent_action,intervention,cost,agent_reward,principal_reward,logprob,wm_prediction";

inline std::string to_csv(const EpisodeTrace& trace) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << kTraceCsvHeader << '\n';
  for (const auto& s : trace.steps)
    os << s.t << ',' << s.agent_action << ',' << s.intervention << ',' << s.cost << ','
       << s.agent_reward << ',' << s.principal_reward << ',' << s.logprob << ','
       << s.wm_prediction << '\n';
  return os.str();
}

inline EpisodeTrace trace_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kTraceCsvHeader)
    throw ConfigError("trace CSV: missing or unexpected header");
  EpisodeTrace trace;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw ConfigError("trace CSV: expected 8 columns in '" + line + "'");
    StepRecord s;
    try {
      s.t = std::stoi(cells[0]);
      s.agent_action = std::stoi(cells[1]);
      s.intervention = std::stod(cells[2]);
      s.cost = std::stod(cells[3]);
      s.agent_reward = std::stod(cells[4]);
      s.principal_reward = std::stod(cells[5]);
      s.logprob = std::stod(cells[6]);
      s.wm_prediction = std::stoi(cells[7]);
    } catch (const std::exception&) {
      throw ConfigError("trace CSV: malformed row '" + line + "'");
    }
    trace.steps.push_back(s);
  }
  return trace;
}

inline void write_trace_csv(const EpisodeTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError(path, "cannot open for writing");
  f << to_csv(trace);
  if (!f) throw IoError(path, "write failed");
}

inline EpisodeTrace read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path, "cannot open for reading");
  std::stringstream ss;
  ss << f.rdbuf();
  return trace_from_csv(ss.str());
}

/// Rebuilds a bandit learner's final state from the rewards it experienced.
/// EXP3 selection probabilities are recomputed from the replayed state.
inline agents::LearnerState replay_learner(const agents::LearnerSpec& spec, int num_arms,
                                           const EpisodeTrace& trace) {
  using agents::Algorithm;
  auto s = agents::LearnerState::fresh(num_arms);
  for (const auto& step : trace.steps) {
    if (spec.algorithm == Algorithm::Exp3) {
      s.last_probs = agents::exp3_probabilities(s, spec.exploration);
      s = agents::exp3_update(std::move(s), step.agent_action, step.agent_reward,
                              s.last_probs.at(static_cast<std::size_t>(step.agent_action)));
    } else {
      s = agents::mean_update(std::move(s), step.agent_action, step.agent_reward);
    }
  }
  return s;
}

}  // namespace mermaide::env
