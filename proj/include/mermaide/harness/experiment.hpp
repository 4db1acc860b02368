// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/env/stackelberg.hpp"
#include "mermaide/harness/config.hpp"
#include "mermaide/harness/results.hpp"
#include "mermaide/harness/tasks.hpp"
#include "mermaide/learning/meta.hpp"
#include "mermaide/learning/stackelberg.hpp"
#include "mermaide/principal/bandit_principal.hpp"

namespace mermaide::harness {

using learning::WorldModelRef;
using principal::Conditioning;
using principal::PolicyNet;
using principal::WorldModelNet;

/// Progress sink; the CLI prints to stderr, tests pass nothing.
using Progress = std::function<void(const std::string&)>;

inline void note(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

struct PrincipalRecipe {
  Conditioning conditioning;
  bool meta;  // second-level MAML training (K_train inner steps) or plain REINFORCE
};

inline PrincipalRecipe recipe(const std::string& id) {
  if (id == "MF-RL") return {Conditioning::ModelFree, false};
  if (id == "MF-MAML") return {Conditioning::ModelFree, true};
  if (id == "WM-RL") return {Conditioning::WorldModelOnly, false};
  if (id == "MERMAIDE") return {Conditioning::Full, true};
  if (id == "SB-RL") return {Conditioning::Oracle, false};
  if (id == "SB-MAML") return {Conditioning::Oracle, true};
  throw ConfigError("'" + id + "' is not a learned principal");
}

struct TrainedPrincipal {
  std::string id;
  PolicyNet net;
  learning::ParamVector theta;
  WorldModelRef wm;
  std::vector<learning::TrainLogRow> log;
};

inline learning::TrainConfig train_config_for(const ExperimentConfig& cfg, const std::string& id,
                                              std::uint64_t seed) {
  learning::TrainConfig t = cfg.train;
  t.seed = seed;
  t.horizon = cfg.horizon;
  t.alpha = cfg.alpha;
  t.gamma = cfg.gamma;
  if (!recipe(id).meta) t.k_train = 0;
  return t;
}

inline TrainedPrincipal train_principal(const ExperimentConfig& cfg, const std::string& id, std::uint64_t seed,
                                        const std::vector<env::BanditTask>& tasks, const Progress& progress = {}) {
  const auto r = recipe(id);
  const auto tcfg = train_config_for(cfg, id, seed);
  PolicyNet net{cfg.tasks.num_arms, r.conditioning, tcfg.hidden, tcfg.layers};
  const int every = std::max(1, tcfg.epochs / 10);
  auto res = learning::meta_train(net, tcfg, tasks, {}, [&](const learning::TrainLogRow& row, const learning::ParamVector&) {
    if (row.epoch % every == 0 || row.epoch + 1 == tcfg.epochs) {
      std::ostringstream os;
      os << id << " seed " << seed << " epoch " << row.epoch << " score " << row.mean_score;
      note(progress, os.str());
    }
  });
  TrainedPrincipal tp{id, net, res.theta, {}, res.log};
  if (!res.omega.empty()) tp.wm = std::make_pair(WorldModelNet{cfg.tasks.num_arms, tcfg.hidden, tcfg.layers}, res.omega);
  return tp;
}

inline std::filesystem::path model_path(const std::string& dir, const std::string& id, std::uint64_t seed) {
  return std::filesystem::path(dir) / id / ("model_seed" + std::to_string(seed) + ".json");
}

inline void save_model(const TrainedPrincipal& tp, const std::filesystem::path& path) {
  nlohmann::json j{{"format", "mermaide.model"},
                   {"version", 1},
                   {"principal", tp.id},
                   {"conditioning", principal::to_string(tp.net.conditioning)},
                   {"num_arms", tp.net.num_arms},
                   {"hidden", tp.net.hidden},
                   {"layers", tp.net.layers},
                   {"theta", ad::to_json(tp.theta)}};
  if (tp.wm) j["omega"] = ad::to_json(tp.wm->second);
  write_text(path, j.dump());
}

inline TrainedPrincipal load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing checkpoint " + path.string());
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    if (j.value("format", "") != "mermaide.model") throw IoError(path.string(), "not a model file");
    TrainedPrincipal tp;
    tp.id = j.at("principal").get<std::string>();
    tp.net = {j.at("num_arms").get<int>(), recipe(tp.id).conditioning, j.at("hidden").get<int>(),
              j.at("layers").get<int>()};
    tp.theta = ad::params_from_json(j.at("theta"));
    if (j.contains("omega"))
      tp.wm = std::make_pair(WorldModelNet{tp.net.num_arms, tp.net.hidden, tp.net.layers},
                             ad::params_from_json(j.at("omega")));
    return tp;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), e.what());
  }
}

inline std::unique_ptr<principal::BanditPrincipal> make_fixed_principal(const ExperimentConfig& cfg,
                                                                        const std::string& id) {
  using principal::ScheduledPrincipal;
  if (id == "NoIntervention") return std::make_unique<principal::NoInterventionPrincipal>();
  if (id == "S1") return std::make_unique<ScheduledPrincipal>(ScheduledPrincipal::Schedule::S1, cfg.schedule_level);
  if (id == "S2") return std::make_unique<ScheduledPrincipal>(ScheduledPrincipal::Schedule::S2, cfg.schedule_level);
  if (id == "RB") return std::make_unique<principal::RuleBasedPrincipal>(cfg.rb_level);
  throw ConfigError("'" + id + "' is not a fixed principal");
}

/// Evaluation seed for (principal seed, test task index).
inline std::uint64_t eval_seed(std::uint64_t seed, std::size_t task) {
  return seed * 1000003ULL + 7919ULL * (task + 1);
}

struct BanditRunOutput {
  ResultsTable table;
  std::vector<TaggedTrace> traces;
  std::vector<std::string> artifacts;  // written during the run (models, logs)
  std::vector<TrainedPrincipal> models;
};

inline bool reference_omits(const ExperimentConfig& cfg, const LearnerSpec& test) {
  // The cross-algorithm reference table prints "-" for UCB-trained principals on eps = 0.5.
  return cfg.kind == ExperimentKind::BanditTable2CrossAlgo && cfg.train_learner.algorithm == Algorithm::Ucb &&
         test.algorithm == Algorithm::EpsGreedy && test.exploration == 0.5;
}

/// Trains (or loads) each learned principal once per seed on the training
/// tasks, then for every test learner K-shot adapts per test task and
/// evaluates one episode. A cell's mean and s.e. are over seeds of the
/// per-seed average across test tasks.
inline BanditRunOutput run_bandit_experiment(const ExperimentConfig& cfg, const Progress& progress = {},
                                             bool write_models = true) {
  cfg.validate();
  BanditRunOutput out;
  const std::string train_spec = cfg.train_learner.label();
  const auto tr_tasks = train_tasks(cfg, cfg.train_learner);
  for (const auto& id : cfg.principals) {
    const bool learned = is_learned_principal(id);
    std::vector<TrainedPrincipal> models;
    if (learned) {
      for (auto s : cfg.seeds) {
        if (cfg.train_enabled) {
          note(progress, "training " + id + " seed " + std::to_string(s));
          auto tp = train_principal(cfg, id, s, tr_tasks, progress);
          if (write_models) {
            const auto dir = std::filesystem::path(cfg.output_dir) / cfg.name;
            save_model(tp, model_path(dir.string(), id, s));
            write_text(dir / id / ("train_log_seed" + std::to_string(s) + ".csv"), learning::log_to_csv(tp.log));
            out.artifacts.push_back(id + "/model_seed" + std::to_string(s) + ".json");
            out.artifacts.push_back(id + "/train_log_seed" + std::to_string(s) + ".csv");
          }
          models.push_back(std::move(tp));
        } else {
          models.push_back(load_model(model_path(cfg.checkpoint_dir, id, s)));
        }
      }
    }
    const std::vector<int> ks = !learned ? std::vector<int>{0} : id == "MERMAIDE" ? cfg.mermaide_K : cfg.K;
    for (const auto& l : cfg.test_learners) {
      const auto te_tasks = test_tasks(cfg, l);
      for (int k : ks) {
        std::vector<double> per_seed;
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
          const auto s = cfg.seeds[si];
          double total = 0.0;
          for (std::size_t i = 0; i < te_tasks.size(); ++i) {
            learning::EvalResult r;
            if (learned) {
              const auto& m = models[si];
              r = learning::evaluate_learned(m.net, m.theta, m.wm, te_tasks[i], k, cfg.train.inner_lr, cfg.horizon,
                                             cfg.alpha, cfg.gamma, {eval_seed(s, i)}, id);
            } else {
              auto p = make_fixed_principal(cfg, id);
              r = learning::evaluate_fixed(*p, te_tasks[i], cfg.horizon, cfg.alpha, cfg.gamma, {eval_seed(s, i)});
            }
            total += r.mean;
            if (cfg.emit_traces)
              out.traces.push_back({id, k, train_spec, l.label(), s, static_cast<int>(i), r.traces.front()});
          }
          per_seed.push_back(total / static_cast<double>(te_tasks.size()));
        }
        const auto [m, se] = learning::mean_se(per_seed);
        out.table.cells.push_back({id, k, train_spec, l.label(), m, se, static_cast<int>(per_seed.size()),
                                   reference_omits(cfg, l)});
        std::ostringstream os;
        os << id << " K=" << k << " on " << l.label() << ": " << m << " (" << se << ")";
        note(progress, os.str());
      }
    }
    for (auto& m : models) out.models.push_back(std::move(m));
  }
  return out;
}

// ---- Exploration counts ----------------------------------------------------

struct Table4Output {
  ResultsTable table;
  std::vector<ExplorationRow> ucb;
  std::vector<ExplorationRow> eps;
  std::vector<double> calibrated_beta;  // per eps column, when requested
};

/// Exploration counts on the union of the generated train and test tasks.
inline Table4Output run_table4(const ExperimentConfig& cfg, const Progress& progress = {}) {
  auto tasks = train_tasks(cfg, {});
  for (auto& t : test_tasks(cfg, {})) tasks.push_back(t);
  Table4Output out;
  out.ucb = characterize_exploration(tasks, learner_grid(Algorithm::Ucb), cfg.horizon, cfg.seeds);
  out.eps = characterize_exploration(tasks, learner_grid(Algorithm::EpsGreedy), cfg.horizon, cfg.seeds);
  const int n = static_cast<int>(cfg.seeds.size());
  for (const auto& r : out.ucb) out.table.cells.push_back({"NoIntervention", 0, "exploration", r.learner.label(), r.mean, r.se, n, false});
  for (const auto& r : out.eps) out.table.cells.push_back({"NoIntervention", 0, "exploration", r.learner.label(), r.mean, r.se, n, false});
  if (cfg.calibrate) {
    for (const auto& r : out.eps) {
      const double b = calibrate_beta(tasks, r.mean, cfg.horizon, cfg.seeds);
      out.calibrated_beta.push_back(b);
      out.table.cells.push_back({"calibrated_beta", 0, "exploration", r.learner.label(), b, 0.0, n, false});
      note(progress, "calibrated beta for " + r.learner.label() + ": " + std::to_string(b));
    }
  }
  return out;
}

/// max/min - 1 of a pair of counts.
inline double relative_gap(double a, double b) { return std::max(a, b) / std::min(a, b) - 1.0; }

// ---- Fixed-strategy characterization ----------------------------------------

struct B3Row {
  std::string vector;
  double beta = 0.0;
  std::string strategy;
  std::uint64_t seed = 0;
  double score = 0.0;
  std::vector<int> astar;      // 1 when the agent picked a*
  std::vector<int> preferred;  // 1 when it picked its unintervened best arm
  int astar_count() const { return static_cast<int>(std::count(astar.begin(), astar.end(), 1)); }
  int preferred_count() const { return static_cast<int>(std::count(preferred.begin(), preferred.end(), 1)); }
};

inline std::vector<B3Row> b3_characterization(const B3Vector& v, const std::vector<double>& betas,
                                              const std::vector<std::uint64_t>& seeds, int horizon, double alpha,
                                              double level = 1.0, double reward_noise = env::kDefaultRewardNoise) {
  std::vector<B3Row> rows;
  env::BanditTask task;
  task.rewards = v.rewards;
  task.a_star = v.a_star;
  task.reward_noise = reward_noise;
  task.validate();
  const int best = task.best_arm();
  for (double beta : betas) {
    task.learner = {Algorithm::Ucb, beta};
    for (const char* strategy : {"None", "S1", "S2"}) {
      for (auto s : seeds) {
        std::unique_ptr<principal::BanditPrincipal> p;
        const std::string st = strategy;
        if (st == "None") p = std::make_unique<principal::NoInterventionPrincipal>();
        else p = std::make_unique<principal::ScheduledPrincipal>(
            st == "S1" ? principal::ScheduledPrincipal::Schedule::S1 : principal::ScheduledPrincipal::Schedule::S2, level);
        const auto tr = principal::run_bandit_episode(task, *p, horizon, Rng(s));
        B3Row r{v.id, beta, st, s, env::episode_score(tr, alpha, 1.0), {}, {}};
        for (const auto& step : tr.steps) {
          r.astar.push_back(step.agent_action == v.a_star ? 1 : 0);
          r.preferred.push_back(step.agent_action == best ? 1 : 0);
        }
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

inline std::string b3_to_csv(const std::vector<B3Row>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "vector,beta,strategy,seed,score,astar_count,preferred_count,astar_bits,preferred_bits\n";
  for (const auto& r : rows) {
    os << r.vector << ',' << r.beta << ',' << r.strategy << ',' << r.seed << ',' << r.score << ','
       << r.astar_count() << ',' << r.preferred_count() << ',';
    for (int b : r.astar) os << b;
    os << ',';
    for (int b : r.preferred) os << b;
    os << '\n';
  }
  return os.str();
}

inline ResultsTable b3_table(const std::vector<B3Row>& rows) {
  ResultsTable t;
  std::map<std::tuple<std::string, std::string, double>, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.strategy, r.vector, r.beta}].push_back(r.score);
  for (const auto& [key, scores] : groups) {
    const auto [m, se] = learning::mean_se(scores);
    char spec[32];
    std::snprintf(spec, sizeof spec, "ucb_%g", std::get<2>(key));
    t.cells.push_back({std::get<0>(key), 0, std::get<1>(key), spec, m, se, static_cast<int>(scores.size()), false});
  }
  return t;
}

// ---- Stackelberg sweep ------------------------------------------------------

struct StackelbergSweepOutput {
  ResultsTable table;
  std::vector<std::tuple<std::uint64_t, std::string, learning::StackelbergCurvePoint>> curve;
  struct Final {
    std::uint64_t seed;
    std::string trainer;  // maml, rl, rl_scratch
    double u;
    double probability;
    double equilibrium;
    bool matches;
  };
  std::vector<Final> finals;
};

/// Tolerance on |p - p*| for the equilibrium-match flag.
inline constexpr double kEquilibriumMatchTolerance = 0.1;

inline StackelbergSweepOutput stackelberg_sweep(const ExperimentConfig& cfg, const Progress& progress = {}) {
  StackelbergSweepOutput out;
  const principal::StackelbergPolicyNet net{cfg.stackelberg.hidden};
  std::map<std::pair<std::string, double>, std::vector<double>> finals;
  for (auto s : cfg.seeds) {
    auto sc = cfg.stackelberg;
    sc.seed = s;
    if (cfg.kind == ExperimentKind::StackelbergMulti) sc.setting = env::StackelbergSetting::MultiRoundNoisy;
    else if (sc.setting == env::StackelbergSetting::MultiRoundNoisy) sc.setting = env::StackelbergSetting::SingleRoundPerfect;
    for (auto trainer : {learning::StackelbergTrainer::Maml, learning::StackelbergTrainer::Rl}) {
      note(progress, std::string("training ") + learning::to_string(trainer) + " seed " + std::to_string(s));
      const auto res = learning::stackelberg_train(net, sc, trainer, cfg.stackelberg_test_types, cfg.curve_every);
      for (const auto& p : res.curve) out.curve.emplace_back(s, learning::to_string(trainer), p);
      for (std::size_t j = 0; j < cfg.stackelberg_test_types.size(); ++j) {
        const double u = cfg.stackelberg_test_types[j];
        const Rng r = Rng(s).split(900 + j);
        const auto adapted = learning::stackelberg_adapt(net, res.theta, sc, u, 1, r.split(1));
        finals[{learning::to_string(trainer), u}].push_back(
            learning::intervention_probability(net, adapted, sc, u, r.split(2)));
      }
    }
    for (std::size_t j = 0; j < cfg.stackelberg_test_types.size(); ++j) {
      const double u = cfg.stackelberg_test_types[j];
      const Rng r = Rng(s).split(900 + j);
      const auto scratch = learning::stackelberg_rl_from_scratch(net, sc, u, 1, r.split(3));
      finals[{"rl_scratch", u}].push_back(learning::intervention_probability(net, scratch, sc, u, r.split(2)));
    }
  }
  const auto setting = cfg.kind == ExperimentKind::StackelbergMulti ? env::StackelbergSetting::MultiRoundNoisy
                       : cfg.stackelberg.setting == env::StackelbergSetting::MultiRoundNoisy
                           ? env::StackelbergSetting::SingleRoundPerfect
                           : cfg.stackelberg.setting;
  for (const auto& [key, ps] : finals) {
    const auto [m, se] = learning::mean_se(ps);
    char spec[32];
    std::snprintf(spec, sizeof spec, "u_%g", key.second);
    out.table.cells.push_back({key.first, 1, env::to_string(setting), spec, m, se, static_cast<int>(ps.size()), false});
    const double eq = env::stackelberg_equilibrium_oracle(key.second, cfg.stackelberg.c, setting).intervene_probability;
    for (std::size_t i = 0; i < ps.size(); ++i)
      out.finals.push_back({cfg.seeds[i], key.first, key.second, ps[i], eq, std::abs(ps[i] - eq) < kEquilibriumMatchTolerance});
  }
  return out;
}

inline std::string stackelberg_curve_csv(const StackelbergSweepOutput& o) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,trainer,epoch,u,probability\n";
  for (const auto& [s, tr, p] : o.curve) os << s << ',' << tr << ',' << p.epoch << ',' << p.u << ',' << p.probability << '\n';
  return os.str();
}

inline std::string stackelberg_finals_csv(const StackelbergSweepOutput& o) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,trainer,u,probability,equilibrium,matches\n";
  for (const auto& f : o.finals)
    os << f.seed << ',' << f.trainer << ',' << f.u << ',' << f.probability << ',' << f.equilibrium << ','
       << (f.matches ? 1 : 0) << '\n';
  return os.str();
}

// ---- Dispatch ----------------------------------------------------------------

struct ExperimentOutput {
  ResultsTable table;
  std::vector<std::string> artifacts;
};

/// Resolves every identifier without simulating.
inline std::vector<std::string> dry_run(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::string> plan;
  plan.push_back(std::string("kind ") + to_string(cfg.kind));
  if (cfg.is_bandit_evaluation()) {
    for (const auto& p : cfg.principals) {
      if (is_learned_principal(p)) {
        recipe(p);
        if (!cfg.train_enabled)
          for (auto s : cfg.seeds) plan.push_back("load " + model_path(cfg.checkpoint_dir, p, s).string());
      } else {
        make_fixed_principal(cfg, p);
      }
      plan.push_back("principal " + p);
    }
    for (const auto& l : cfg.test_learners) plan.push_back("test " + l.label());
  }
  if (cfg.kind == ExperimentKind::B3Characterization)
    for (const auto& v : cfg.b3_vectors) plan.push_back("vector " + b3_vector(v).id);
  return plan;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg, const Progress& progress = {}) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path root = fs::path(cfg.output_dir) / cfg.name;
  ExperimentOutput out;
  switch (cfg.kind) {
    case ExperimentKind::BanditTable1:
    case ExperimentKind::BanditTable2CrossAlgo: {
      auto r = run_bandit_experiment(cfg, progress);
      out.table = std::move(r.table);
      out.artifacts = emit_results(cfg, out.table, r.traces, r.artifacts);
      break;
    }
    case ExperimentKind::Table4Calibration: {
      auto r = run_table4(cfg, progress);
      out.table = std::move(r.table);
      out.artifacts = emit_results(cfg, out.table, {});
      break;
    }
    case ExperimentKind::B3Characterization: {
      std::vector<B3Row> rows;
      std::vector<double> betas;
      for (const auto& l : cfg.test_learners)
        if (l.algorithm == Algorithm::Ucb) betas.push_back(l.exploration);
      for (const auto& v : cfg.b3_vectors) {
        auto r = b3_characterization(b3_vector(v), betas, cfg.seeds, cfg.horizon, cfg.alpha, cfg.schedule_level,
                                     cfg.tasks.reward_noise);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      out.table = b3_table(rows);
      write_text(root / "b3_indicators.csv", b3_to_csv(rows));
      out.artifacts = emit_results(cfg, out.table, {}, {"b3_indicators.csv"});
      break;
    }
    case ExperimentKind::StackelbergSingle:
    case ExperimentKind::StackelbergMulti: {
      auto r = stackelberg_sweep(cfg, progress);
      out.table = std::move(r.table);
      write_text(root / "stackelberg_curves.csv", stackelberg_curve_csv(r));
      write_text(root / "stackelberg_final.csv", stackelberg_finals_csv(r));
      out.artifacts = emit_results(cfg, out.table, {}, {"stackelberg_curves.csv", "stackelberg_final.csv"});
      break;
    }
  }
  return out;
}

}  // namespace mermaide::harness
