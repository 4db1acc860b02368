// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mermaide/agents/learners.hpp"
#include "mermaide/core/error.hpp"
#include "mermaide/env/bandit.hpp"
#include "mermaide/env/stackelberg.hpp"
#include "mermaide/learning/meta.hpp"
#include "mermaide/learning/stackelberg.hpp"

namespace mermaide::harness {

using agents::Algorithm;
using agents::LearnerSpec;
using nlohmann::json;

enum class ExperimentKind {
  StackelbergSingle,
  StackelbergMulti,
  BanditTable1,
  BanditTable2CrossAlgo,
  Table4Calibration,
  B3Characterization,
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::StackelbergSingle: return "stackelberg_single";
    case ExperimentKind::StackelbergMulti: return "stackelberg_multi";
    case ExperimentKind::BanditTable1: return "bandit_table1";
    case ExperimentKind::BanditTable2CrossAlgo: return "bandit_table2_crossalgo";
    case ExperimentKind::Table4Calibration: return "table4_calibration";
    case ExperimentKind::B3Characterization: return "b3_characterization";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::StackelbergSingle, ExperimentKind::StackelbergMulti,
                 ExperimentKind::BanditTable1, ExperimentKind::BanditTable2CrossAlgo,
                 ExperimentKind::Table4Calibration, ExperimentKind::B3Characterization})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

inline const std::vector<std::string>& principal_ids() {
  static const std::vector<std::string> ids{"NoIntervention", "S1", "S2", "RB", "MF-RL",
                                            "MF-MAML", "WM-RL", "MERMAIDE", "SB-RL", "SB-MAML"};
  return ids;
}

inline bool is_learned_principal(const std::string& id) {
  return id == "MF-RL" || id == "MF-MAML" || id == "WM-RL" || id == "MERMAIDE" || id == "SB-RL" ||
         id == "SB-MAML";
}

inline const std::vector<double>& ucb_beta_grid() {
  static const std::vector<double> g{0.17, 0.27, 0.42, 0.5, 0.67};
  return g;
}
inline const std::vector<double>& eps_grid() {
  static const std::vector<double> g{0.1, 0.2, 0.3, 0.4, 0.5};
  return g;
}

inline std::vector<LearnerSpec> learner_grid(Algorithm a) {
  std::vector<LearnerSpec> out;
  for (double x : a == Algorithm::Ucb ? ucb_beta_grid() : eps_grid()) out.push_back({a, x});
  return out;
}

struct TaskSetSpec {
  std::uint64_t seed = 1001;
  int n_train = 15;
  int n_test = 10;
  int num_arms = 10;
  double reward_noise = env::kDefaultRewardNoise;
  bool noise_is_variance = false;

  void validate() const {
    if (n_train < 1 || n_test < 1) throw ConfigError("task counts must be >= 1");
    if (num_arms < 2) throw ConfigError("num_arms must be >= 2");
    if (!(reward_noise >= 0.0)) throw ConfigError("reward_noise must be >= 0");
  }
};

/// Declarative description of one run. Every field has an explicit default;
/// the JSON form lists all of them (see README.md).
struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::BanditTable1;
  TaskSetSpec tasks;
  LearnerSpec train_learner{Algorithm::Ucb, 0.17};
  std::vector<LearnerSpec> test_learners = learner_grid(Algorithm::Ucb);
  std::vector<std::string> principals{"NoIntervention", "MF-RL", "MF-MAML", "WM-RL", "MERMAIDE"};
  std::vector<int> K{1};
  std::vector<int> mermaide_K{0, 1};
  std::vector<std::uint64_t> seeds{11, 26, 90};
  int horizon = 200;
  double alpha = 0.2;
  double gamma = 1.0;
  double rb_level = 1.0;
  double schedule_level = 1.0;
  learning::TrainConfig train;
  learning::StackelbergConfig stackelberg;
  std::vector<double> stackelberg_test_types{0.93, 0.21, 0.07};
  int curve_every = 100;
  std::vector<std::string> b3_vectors{"fig7", "fig8", "fig9"};
  bool calibrate = false;
  std::string output_dir = "results";
  std::string checkpoint_dir;
  bool train_enabled = true;
  bool emit_traces = false;

  bool is_bandit_evaluation() const {
    return kind == ExperimentKind::BanditTable1 || kind == ExperimentKind::BanditTable2CrossAlgo;
  }

  void validate() const {
    if (name.empty()) throw ConfigError("name must be non-empty");
    tasks.validate();
    train_learner.validate();
    for (const auto& l : test_learners) l.validate();
    if (seeds.empty()) throw ConfigError("seeds must be explicit and non-empty");
    for (const auto& p : principals)
      if (std::find(principal_ids().begin(), principal_ids().end(), p) == principal_ids().end())
        throw ConfigError("unknown principal '" + p + "'");
    for (int k : K)
      if (k < 0) throw ConfigError("K values must be >= 0");
    for (int k : mermaide_K)
      if (k < 0) throw ConfigError("mermaide_K values must be >= 0");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
    env::level_index(rb_level);
    env::level_index(schedule_level);
    train.validate();
    stackelberg.validate();
    for (double u : stackelberg_test_types)
      if (!(u > 0.0 && u < 1.0)) throw ConfigError("Stackelberg test types must lie in (0,1)");
    if (curve_every < 0) throw ConfigError("curve_every must be >= 0");
    for (const auto& v : b3_vectors)
      if (v != "fig7" && v != "fig8" && v != "fig9") throw ConfigError("unknown behavior vector '" + v + "'");
    if (!train_enabled && checkpoint_dir.empty() && is_bandit_evaluation()) {
      for (const auto& p : principals)
        if (is_learned_principal(p)) throw ConfigError("training disabled but no checkpoint_dir given");
    }
  }
};

inline json learner_to_json(const LearnerSpec& l) {
  return {{"algorithm", agents::to_string(l.algorithm)},
          {"exploration", l.exploration},
          {"ucb_confidence_scale", l.ucb_confidence_scale}};
}

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline LearnerSpec learner_from_json(const json& j) {
  detail::reject_unknown(j, {"algorithm", "exploration", "ucb_confidence_scale"}, "learner");
  LearnerSpec l;
  std::string alg = agents::to_string(l.algorithm);
  detail::read(j, "algorithm", alg);
  l.algorithm = agents::algorithm_from_string(alg);
  detail::read(j, "exploration", l.exploration);
  detail::read(j, "ucb_confidence_scale", l.ucb_confidence_scale);
  return l;
}

inline json train_to_json(const learning::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"k_train", t.k_train},
          {"inner_lr", t.inner_lr},
          {"meta_lr", t.meta_lr},
          {"wm_lr", t.wm_lr},
          {"wm_steps_per_epoch", t.wm_steps_per_epoch},
          {"wm_batch", t.wm_batch},
          {"episodes_per_inner_update", t.episodes_per_inner_update},
          {"first_order", t.first_order},
          {"baseline_decay", t.baseline_decay},
          {"buffer_capacity", t.buffer_capacity},
          {"hidden", t.hidden},
          {"layers", t.layers},
          {"checkpoint_every", t.checkpoint_every}};
}

inline learning::TrainConfig train_from_json(const json& j) {
  detail::reject_unknown(j, {"epochs", "k_train", "inner_lr", "meta_lr", "wm_lr", "wm_steps_per_epoch",
                             "wm_batch", "episodes_per_inner_update", "first_order", "baseline_decay",
                             "buffer_capacity", "hidden", "layers", "checkpoint_every"},
                         "train");
  learning::TrainConfig t;
  detail::read(j, "epochs", t.epochs);
  detail::read(j, "k_train", t.k_train);
  detail::read(j, "inner_lr", t.inner_lr);
  detail::read(j, "meta_lr", t.meta_lr);
  detail::read(j, "wm_lr", t.wm_lr);
  detail::read(j, "wm_steps_per_epoch", t.wm_steps_per_epoch);
  detail::read(j, "wm_batch", t.wm_batch);
  detail::read(j, "episodes_per_inner_update", t.episodes_per_inner_update);
  detail::read(j, "first_order", t.first_order);
  detail::read(j, "baseline_decay", t.baseline_decay);
  detail::read(j, "buffer_capacity", t.buffer_capacity);
  detail::read(j, "hidden", t.hidden);
  detail::read(j, "layers", t.layers);
  detail::read(j, "checkpoint_every", t.checkpoint_every);
  return t;
}

inline json stackelberg_to_json(const learning::StackelbergConfig& s) {
  return {{"setting", env::to_string(s.setting)},
          {"c", s.c},
          {"obs_noise", s.obs_noise},
          {"payoff_noise", s.payoff_noise},
          {"plays", s.plays},
          {"horizon", s.horizon},
          {"num_train_types", s.num_train_types},
          {"epochs", s.epochs},
          {"inner_lr", s.inner_lr},
          {"meta_lr", s.meta_lr},
          {"hidden", s.hidden},
          {"baseline_decay", s.baseline_decay}};
}

inline learning::StackelbergConfig stackelberg_from_json(const json& j) {
  detail::reject_unknown(j, {"setting", "c", "obs_noise", "payoff_noise", "plays", "horizon", "num_train_types",
                             "epochs", "inner_lr", "meta_lr", "hidden", "baseline_decay"},
                         "stackelberg");
  learning::StackelbergConfig s;
  std::string setting = env::to_string(s.setting);
  detail::read(j, "setting", setting);
  s.setting = env::stackelberg_setting_from_string(setting);
  detail::read(j, "c", s.c);
  detail::read(j, "obs_noise", s.obs_noise);
  detail::read(j, "payoff_noise", s.payoff_noise);
  detail::read(j, "plays", s.plays);
  detail::read(j, "horizon", s.horizon);
  detail::read(j, "num_train_types", s.num_train_types);
  detail::read(j, "epochs", s.epochs);
  detail::read(j, "inner_lr", s.inner_lr);
  detail::read(j, "meta_lr", s.meta_lr);
  detail::read(j, "hidden", s.hidden);
  detail::read(j, "baseline_decay", s.baseline_decay);
  return s;
}

inline json to_json(const ExperimentConfig& c) {
  json tl = json::array();
  for (const auto& l : c.test_learners) tl.push_back(learner_to_json(l));
  return {{"name", c.name},
          {"kind", to_string(c.kind)},
          {"tasks",
           {{"seed", c.tasks.seed},
            {"n_train", c.tasks.n_train},
            {"n_test", c.tasks.n_test},
            {"num_arms", c.tasks.num_arms},
            {"reward_noise", c.tasks.reward_noise},
            {"noise_is_variance", c.tasks.noise_is_variance}}},
          {"train_learner", learner_to_json(c.train_learner)},
          {"test_learners", tl},
          {"principals", c.principals},
          {"K", c.K},
          {"mermaide_K", c.mermaide_K},
          {"seeds", c.seeds},
          {"horizon", c.horizon},
          {"alpha", c.alpha},
          {"gamma", c.gamma},
          {"rb_level", c.rb_level},
          {"schedule_level", c.schedule_level},
          {"train", train_to_json(c.train)},
          {"stackelberg", stackelberg_to_json(c.stackelberg)},
          {"stackelberg_test_types", c.stackelberg_test_types},
          {"curve_every", c.curve_every},
          {"b3_vectors", c.b3_vectors},
          {"calibrate", c.calibrate},
          {"output_dir", c.output_dir},
          {"checkpoint_dir", c.checkpoint_dir},
          {"train_enabled", c.train_enabled},
          {"emit_traces", c.emit_traces}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"name", "kind", "tasks", "train_learner", "test_learners", "principals", "K",
                          "mermaide_K", "seeds", "horizon", "alpha", "gamma", "rb_level", "schedule_level",
                          "train", "stackelberg", "stackelberg_test_types", "curve_every", "b3_vectors",
                          "calibrate", "output_dir", "checkpoint_dir", "train_enabled", "emit_traces"},
                         "config");
  ExperimentConfig c;
  detail::read(j, "name", c.name);
  std::string kind = to_string(c.kind);
  detail::read(j, "kind", kind);
  c.kind = experiment_kind_from_string(kind);
  if (j.contains("tasks")) {
    const auto& t = j.at("tasks");
    detail::reject_unknown(t, {"seed", "n_train", "n_test", "num_arms", "reward_noise", "noise_is_variance"},
                           "tasks");
    detail::read(t, "seed", c.tasks.seed);
    detail::read(t, "n_train", c.tasks.n_train);
    detail::read(t, "n_test", c.tasks.n_test);
    detail::read(t, "num_arms", c.tasks.num_arms);
    detail::read(t, "reward_noise", c.tasks.reward_noise);
    detail::read(t, "noise_is_variance", c.tasks.noise_is_variance);
  }
  if (j.contains("train_learner")) c.train_learner = learner_from_json(j.at("train_learner"));
  if (j.contains("test_learners")) {
    c.test_learners.clear();
    for (const auto& l : j.at("test_learners")) c.test_learners.push_back(learner_from_json(l));
  }
  detail::read(j, "principals", c.principals);
  detail::read(j, "K", c.K);
  detail::read(j, "mermaide_K", c.mermaide_K);
  detail::read(j, "seeds", c.seeds);
  detail::read(j, "horizon", c.horizon);
  detail::read(j, "alpha", c.alpha);
  detail::read(j, "gamma", c.gamma);
  detail::read(j, "rb_level", c.rb_level);
  detail::read(j, "schedule_level", c.schedule_level);
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("stackelberg")) c.stackelberg = stackelberg_from_json(j.at("stackelberg"));
  detail::read(j, "stackelberg_test_types", c.stackelberg_test_types);
  detail::read(j, "curve_every", c.curve_every);
  detail::read(j, "b3_vectors", c.b3_vectors);
  detail::read(j, "calibrate", c.calibrate);
  detail::read(j, "output_dir", c.output_dir);
  detail::read(j, "checkpoint_dir", c.checkpoint_dir);
  detail::read(j, "train_enabled", c.train_enabled);
  detail::read(j, "emit_traces", c.emit_traces);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path, "cannot open config");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path, e.what());
  }
  return config_from_json(j);
}

/// 64-bit FNV-1a over the canonical (sorted-key) JSON form.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace mermaide::harness
