// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/diffcore/optim.hpp"
#include "mermaide/env/bandit.hpp"
#include "mermaide/learning/reinforce.hpp"
#include "mermaide/learning/world_model.hpp"
#include "mermaide/principal/bandit_principal.hpp"

namespace mermaide::learning {

using principal::Conditioning;
using principal::PolicyNet;
using principal::WorldModelNet;

struct TrainConfig {
  int epochs = 500;
  int k_train = 1;
  double inner_lr = 7e-4;
  double meta_lr = 1e-3;
  double wm_lr = 1e-3;
  int wm_steps_per_epoch = 1;
  int wm_batch = 16;
  int episodes_per_inner_update = 1;
  int horizon = 200;
  double alpha = 0.2;
  double gamma = 1.0;
  bool first_order = false;
  double baseline_decay = kDefaultBaselineDecay;
  int buffer_capacity = 10000;
  std::uint64_t seed = 11;
  int hidden = principal::kDefaultHidden;
  int layers = principal::kDefaultLayers;
  int checkpoint_every = 0;
  std::string checkpoint_dir;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (k_train < 0) throw ConfigError("k_train must be >= 0");
    if (!(inner_lr > 0.0) || !(meta_lr > 0.0) || !(wm_lr > 0.0))
      throw ConfigError("learning rates must be > 0");
    if (episodes_per_inner_update < 1) throw ConfigError("episodes_per_inner_update must be >= 1");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
    if (wm_batch < 1 || wm_steps_per_epoch < 0) throw ConfigError("invalid world-model schedule");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
    if (hidden < 1 || layers < 1) throw ConfigError("invalid network size");
    if (checkpoint_every > 0 && checkpoint_dir.empty())
      throw ConfigError("checkpoint_every needs checkpoint_dir");
  }
};

struct TrainLogRow {
  int epoch = 0;
  double mean_score = 0.0;
  double se = 0.0;
  double wm_nll = 0.0;  // NaN when no world-model step was taken
  friend bool operator==(const TrainLogRow& a, const TrainLogRow& b) {
    const bool nll_eq = (std::isnan(a.wm_nll) && std::isnan(b.wm_nll)) || a.wm_nll == b.wm_nll;
    return a.epoch == b.epoch && a.mean_score == b.mean_score && a.se == b.se && nll_eq;
  }
};

inline std::string log_to_csv(const std::vector<TrainLogRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,mean_score,se,wm_nll\n";
  for (const auto& r : rows) os << r.epoch << ',' << r.mean_score << ',' << r.se << ',' << r.wm_nll << '\n';
  return os.str();
}

/// Mean and standard error (sample standard deviation / sqrt n).
inline std::pair<double, double> mean_se(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

using WorldModelRef = std::optional<std::pair<WorldModelNet, ParamVector>>;

inline principal::RecurrentPrincipal make_recurrent_principal(const std::string& name,
                                                              const PolicyNet& net,
                                                              const ParamVector& theta,
                                                              const WorldModelRef& wm) {
  return principal::RecurrentPrincipal(name, net, theta,
                                       principal::uses_world_model(net.conditioning) ? wm
                                                                                     : WorldModelRef{});
}

/// Plays `n` recorded episodes under fixed parameters.
inline std::vector<principal::RecordedEpisode> rollouts(const PolicyNet& net,
                                                        const ParamVector& theta,
                                                        const WorldModelRef& wm,
                                                        const env::BanditTask& task, int n,
                                                        int horizon, const Rng& rng) {
  auto pr = make_recurrent_principal("policy", net, theta, wm);
  std::vector<principal::RecordedEpisode> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    out.push_back(principal::run_recorded_episode(task, pr, horizon, rng.split(static_cast<std::uint64_t>(j))));
  return out;
}

inline std::vector<const principal::RecordedEpisode*> pointers(
    const std::vector<principal::RecordedEpisode>& eps) {
  std::vector<const principal::RecordedEpisode*> out;
  for (const auto& e : eps) out.push_back(&e);
  return out;
}

inline std::vector<const env::EpisodeTrace*> trace_pointers(
    const std::vector<principal::RecordedEpisode>& eps) {
  std::vector<const env::EpisodeTrace*> out;
  for (const auto& e : eps) out.push_back(&e.trace);
  return out;
}

/// Algorithm-2 adaptation: K episodes against fresh copies of the task's
/// agent, each followed by one REINFORCE step. The world model is frozen.
inline ParamVector k_shot_adapt(const PolicyNet& net, const ParamVector& theta_meta,
                                const WorldModelRef& wm, const env::BanditTask& task, int K,
                                double inner_lr, double alpha, double gamma, int horizon,
                                const Rng& rng, long* env_steps = nullptr) {
  if (K < 0) throw ConfigError("K must be >= 0");
  ParamVector theta = theta_meta;
  Baseline baseline;
  for (int k = 0; k < K; ++k) {
    const auto eps = rollouts(net, theta, wm, task, 1, horizon, rng.split(static_cast<std::uint64_t>(k)));
    if (env_steps) *env_steps += horizon;
    theta = reinforce_update(net, theta, pointers(eps), inner_lr, alpha, gamma, baseline);
  }
  return theta;
}

struct MetaTrainResult {
  ParamVector theta;
  ParamVector omega;  // empty when the principal has no world model
  std::vector<TrainLogRow> log;
};

struct MetaCheckpoint {
  int next_epoch = 0;
  ParamVector theta;
  ad::AdamState meta_adam;
  ParamVector omega;
  ad::AdamState wm_adam;
  std::vector<Baseline> baselines;
  std::vector<std::vector<int>> buffer_actions;
  std::vector<std::vector<int>> buffer_levels;
  std::vector<TrainLogRow> log;
};

inline nlohmann::json adam_to_json(const ad::AdamState& s) {
  return {{"m", ad::to_json(s.m)}, {"v", ad::to_json(s.v)}, {"step", s.step}};
}
inline ad::AdamState adam_from_json(const nlohmann::json& j) {
  return {ad::params_from_json(j.at("m")), ad::params_from_json(j.at("v")), j.at("step").get<long>()};
}

inline void save_checkpoint(const MetaCheckpoint& c, const std::string& path) {
  nlohmann::json j;
  j["format"] = "mermaide.meta_checkpoint";
  j["version"] = 1;
  j["next_epoch"] = c.next_epoch;
  j["theta"] = ad::to_json(c.theta);
  j["meta_adam"] = adam_to_json(c.meta_adam);
  j["has_world_model"] = !c.omega.empty();
  if (!c.omega.empty()) {
    j["omega"] = ad::to_json(c.omega);
    j["wm_adam"] = adam_to_json(c.wm_adam);
  }
  nlohmann::json b = nlohmann::json::array();
  for (const auto& x : c.baselines) b.push_back({{"value", x.value}, {"initialized", x.initialized}});
  j["baselines"] = b;
  j["buffer_actions"] = c.buffer_actions;
  j["buffer_levels"] = c.buffer_levels;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : c.log)
    log.push_back({r.epoch, r.mean_score, r.se, std::isnan(r.wm_nll) ? nlohmann::json(nullptr) : nlohmann::json(r.wm_nll)});
  j["log"] = log;
  std::ofstream f(path);
  if (!f) throw IoError(path, "cannot open for writing");
  f << j.dump();
  if (!f) throw IoError(path, "write failed");
}

inline MetaCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path, "cannot open for reading");
  try {
    const auto j = nlohmann::json::parse(f);
    if (j.value("format", "") != "mermaide.meta_checkpoint")
      throw IoError(path, "not a meta-training checkpoint");
    MetaCheckpoint c;
    c.next_epoch = j.at("next_epoch").get<int>();
    c.theta = ad::params_from_json(j.at("theta"));
    c.meta_adam = adam_from_json(j.at("meta_adam"));
    if (j.at("has_world_model").get<bool>()) {
      c.omega = ad::params_from_json(j.at("omega"));
      c.wm_adam = adam_from_json(j.at("wm_adam"));
    }
    for (const auto& b : j.at("baselines"))
      c.baselines.push_back({b.at("value").get<double>(), b.at("initialized").get<bool>()});
    c.buffer_actions = j.at("buffer_actions").get<std::vector<std::vector<int>>>();
    c.buffer_levels = j.at("buffer_levels").get<std::vector<std::vector<int>>>();
    for (const auto& r : j.at("log"))
      c.log.push_back({r.at(0).get<int>(), r.at(1).get<double>(), r.at(2).get<double>(),
                       r.at(3).is_null() ? std::nan("") : r.at(3).get<double>()});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, e.what());
  }
}

/// Per-epoch progress hook: (epoch row, current theta).
using EpochCallback = std::function<void(const TrainLogRow&, const ParamVector&)>;

/// Meta-training loop. Each epoch: update the world model on the replay buffer;
/// for every task adapt theta_e with K_train REINFORCE steps, roll out the
/// adapted policy, and differentiate its REINFORCE objective through the
/// inner steps; average across tasks and take one Adam ascent step.
/// K_train = 0 is plain REINFORCE on the pooled tasks.
inline MetaTrainResult meta_train(const PolicyNet& net, const TrainConfig& cfg,
                                  const std::vector<env::BanditTask>& tasks,
                                  const std::optional<MetaCheckpoint>& resume = {},
                                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("meta_train: no training tasks");
  for (const auto& t : tasks) {
    t.validate();
    if (t.num_arms() != net.num_arms) throw ConfigError("meta_train: arm count mismatch");
  }
  const bool with_wm = principal::uses_world_model(net.conditioning);
  const Rng root(cfg.seed);
  Rng init_rng = root.split(0xC0FFEE);
  ParamVector theta = net.init(init_rng);
  const WorldModelNet wm_net{net.num_arms, cfg.hidden, cfg.layers};
  std::optional<WorldModelTrainer> wm;
  if (with_wm)
    wm.emplace(wm_net, wm_net.init(init_rng), cfg.wm_lr, static_cast<std::size_t>(cfg.buffer_capacity));
  ad::Adam meta_adam(theta, {cfg.meta_lr});
  std::vector<Baseline> baselines(tasks.size(), Baseline{0.0, false, cfg.baseline_decay});
  MetaTrainResult result;
  int start_epoch = 0;

  if (resume) {
    theta = resume->theta;
    meta_adam.set_state(resume->meta_adam);
    if (with_wm) {
      wm->set_params(resume->omega);
      wm->set_adam_state(resume->wm_adam);
      for (std::size_t i = 0; i < resume->buffer_actions.size(); ++i) {
        env::EpisodeTrace tr;
        for (std::size_t t = 0; t < resume->buffer_actions[i].size(); ++t) {
          const double level = env::kInterventionLevels.at(static_cast<std::size_t>(resume->buffer_levels[i][t]));
          tr.steps.push_back({static_cast<int>(t) + 1, resume->buffer_actions[i][t], level, level,
                              0.0, 0.0, 0.0, -1});
        }
        wm->add(std::move(tr));
      }
    }
    if (resume->baselines.size() == baselines.size()) {
      for (std::size_t i = 0; i < baselines.size(); ++i) {
        baselines[i].value = resume->baselines[i].value;
        baselines[i].initialized = resume->baselines[i].initialized;
      }
    }
    result.log = resume->log;
    start_epoch = resume->next_epoch;
  }

  auto checkpoint = [&](int next_epoch) {
    MetaCheckpoint c;
    c.next_epoch = next_epoch;
    c.theta = theta;
    c.meta_adam = meta_adam.state();
    if (wm) {
      c.omega = wm->params();
      c.wm_adam = wm->adam_state();
      for (const auto& tr : wm->buffer()) {
        std::vector<int> a, l;
        for (const auto& s : tr.steps) a.push_back(s.agent_action), l.push_back(env::level_index(s.intervention));
        c.buffer_actions.push_back(std::move(a));
        c.buffer_levels.push_back(std::move(l));
      }
    }
    c.baselines = baselines;
    c.log = result.log;
    return c;
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const Rng er = root.split(1000 + static_cast<std::uint64_t>(epoch));
    double wm_nll_sum = 0.0;
    if (wm && wm->buffer_size() > 0) {
      Rng wr = er.split(7);
      for (int s = 0; s < cfg.wm_steps_per_epoch; ++s)
        wm_nll_sum += wm->step(static_cast<std::size_t>(cfg.wm_batch), wr);
    }
    const WorldModelRef wm_ref =
        wm ? WorldModelRef{std::make_pair(wm_net, wm->params())} : WorldModelRef{};

    ParamVector meta_grad = theta.zeros_like();
    std::vector<double> scores;
    std::vector<env::EpisodeTrace> new_data;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const Rng tr = er.split(100 + i);
      const ParamVars leaves = ParamVars::leaves(theta);
      ParamVars current = leaves;
      ParamVector current_values = theta;
      Baseline inner_baseline{0.0, false, cfg.baseline_decay};
      for (int k = 0; k < cfg.k_train; ++k) {
        const auto eps = rollouts(net, current_values, wm_ref, tasks[i], cfg.episodes_per_inner_update,
                                  cfg.horizon, tr.split(10 + static_cast<std::uint64_t>(k)));
        for (const auto& e : eps) new_data.push_back(e.trace);
        const auto adv = batch_advantages(trace_pointers(eps), cfg.alpha, cfg.gamma, inner_baseline);
        if (cfg.first_order) {
          const auto v = ParamVars::leaves(current_values);
          current_values = ad::sgd_step(current_values, ad::grad(policy_objective(net, v, pointers(eps), adv), v),
                                        -cfg.inner_lr);
        } else {
          const auto g = ad::grad_vars(policy_objective(net, current, pointers(eps), adv), current);
          current = ad::sgd_step(current, g, -cfg.inner_lr);
          current_values = current.values();
        }
      }
      const auto meta_eps = rollouts(net, current_values, wm_ref, tasks[i], cfg.episodes_per_inner_update,
                                     cfg.horizon, tr.split(99));
      for (const auto& e : meta_eps) {
        new_data.push_back(e.trace);
        scores.push_back(env::episode_score(e.trace, cfg.alpha, 1.0));
      }
      const auto adv = batch_advantages(trace_pointers(meta_eps), cfg.alpha, cfg.gamma, baselines[i]);
      if (cfg.first_order || cfg.k_train == 0) {
        const auto v = ParamVars::leaves(current_values);
        meta_grad += ad::grad(policy_objective(net, v, pointers(meta_eps), adv), v);
      } else {
        meta_grad += ad::grad(policy_objective(net, current, pointers(meta_eps), adv), leaves);
      }
    }
    meta_grad *= 1.0 / static_cast<double>(tasks.size());
    if (!meta_grad.all_finite()) {
      if (!cfg.checkpoint_dir.empty()) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        save_checkpoint(checkpoint(epoch), cfg.checkpoint_dir + "/diagnostic_epoch_" + std::to_string(epoch) + ".json");
      }
      throw InvariantError("non-finite meta-gradient at epoch " + std::to_string(epoch));
    }
    meta_adam.step(theta, meta_grad * -1.0);
    if (wm)
      for (auto& tr : new_data) wm->add(std::move(tr));

    const auto [m, se] = mean_se(scores);
    const double nll = wm ? (cfg.wm_steps_per_epoch > 0 && epoch > 0 ? wm_nll_sum / cfg.wm_steps_per_epoch
                                                                      : std::nan(""))
                          : std::nan("");
    result.log.push_back({epoch, m, se, nll});
    if (on_epoch) on_epoch(result.log.back(), theta);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(checkpoint(epoch + 1), cfg.checkpoint_dir + "/checkpoint.json");
    }
  }
  result.theta = theta;
  if (wm) result.omega = wm->params();
  return result;
}

/// Cost-adjusted scores of one evaluation episode per seed, each after
/// K-shot adaptation from theta_meta against a fresh agent.
struct EvalResult {
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> scores;
  std::vector<env::EpisodeTrace> traces;
};

inline EvalResult evaluate_learned(const PolicyNet& net, const ParamVector& theta_meta,
                                   const WorldModelRef& wm, const env::BanditTask& task, int K,
                                   double inner_lr, int horizon, double alpha, double gamma,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::string& name = "policy") {
  EvalResult r;
  for (auto seed : seeds) {
    const Rng rng(seed);
    const auto theta = k_shot_adapt(net, theta_meta, wm, task, K, inner_lr, alpha, gamma, horizon, rng.split(1));
    auto pr = make_recurrent_principal(name, net, theta, wm);
    r.traces.push_back(principal::run_bandit_episode(task, pr, horizon, rng.split(2)));
    r.scores.push_back(env::episode_score(r.traces.back(), alpha, gamma));
  }
  std::tie(r.mean, r.se) = mean_se(r.scores);
  return r;
}

/// Same protocol for non-learned principals (no adaptation).
inline EvalResult evaluate_fixed(principal::BanditPrincipal& principal, const env::BanditTask& task,
                                 int horizon, double alpha, double gamma,
                                 const std::vector<std::uint64_t>& seeds) {
  EvalResult r;
  for (auto seed : seeds) {
    const Rng rng(seed);
    r.traces.push_back(principal::run_bandit_episode(task, principal, horizon, rng.split(2)));
    r.scores.push_back(env::episode_score(r.traces.back(), alpha, gamma));
  }
  std::tie(r.mean, r.se) = mean_se(r.scores);
  return r;
}

}  // namespace mermaide::learning
