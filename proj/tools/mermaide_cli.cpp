// SPDX-License-Identifier: Apache-2.0
// Command-line front end for the experiment harness.

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mermaide/harness/experiment.hpp"

using namespace mermaide;
using namespace mermaide::harness;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  bool dry_run = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "Run with this single seed instead of the config's list");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--checkpoint", o.checkpoint, "Directory holding trained models");
  cmd->add_flag("--dry-run", o.dry_run, "Validate and resolve identifiers, then exit");
  cmd->add_flag("--quiet", o.quiet, "No progress on stderr");
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.name = to_string(kind);
  switch (kind) {
    case ExperimentKind::BanditTable2CrossAlgo:
      c.train_learner = {Algorithm::Ucb, 0.17};
      c.test_learners = learner_grid(Algorithm::EpsGreedy);
      break;
    case ExperimentKind::StackelbergMulti:
      c.stackelberg.setting = env::StackelbergSetting::MultiRoundNoisy;
      break;
    default:
      break;
  }
  return c;
}

/// Loads --config (or the verb's default) and applies the flag overrides.
ExperimentConfig resolve(const CommonOptions& o, std::optional<ExperimentKind> force_kind,
                         ExperimentKind fallback) {
  ExperimentConfig c = o.config.empty() ? default_config(force_kind.value_or(fallback)) : load_config(o.config);
  if (force_kind) {
    const bool bandit = *force_kind == ExperimentKind::BanditTable1 || *force_kind == ExperimentKind::BanditTable2CrossAlgo;
    const bool sb = *force_kind == ExperimentKind::StackelbergSingle || *force_kind == ExperimentKind::StackelbergMulti;
    const bool compatible = c.kind == *force_kind || (bandit && c.is_bandit_evaluation()) ||
                            (sb && (c.kind == ExperimentKind::StackelbergSingle || c.kind == ExperimentKind::StackelbergMulti));
    if (!compatible)
      throw ConfigError(std::string("config kind '") + to_string(c.kind) + "' does not fit this verb");
    if (!sb) c.kind = *force_kind;
  }
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.checkpoint.empty()) c.checkpoint_dir = o.checkpoint;
  c.validate();
  return c;
}

Progress progress_sink(const CommonOptions& o) {
  if (o.quiet) return {};
  return [](const std::string& s) { std::cerr << s << std::endl; };
}

json summary(const ExperimentConfig& c, const ExperimentOutput& r) {
  return {{"status", "ok"},
          {"experiment", c.name},
          {"kind", to_string(c.kind)},
          {"config_hash", hex64(config_hash(c))},
          {"output", (std::filesystem::path(c.output_dir) / c.name).string()},
          {"results", results_to_json(r.table)}};
}

int run_or_plan(const CommonOptions& o, const ExperimentConfig& c) {
  if (o.dry_run) {
    std::cout << json{{"status", "ok"}, {"dry_run", true}, {"config_hash", hex64(config_hash(c))}, {"plan", dry_run(c)}}.dump(2)
              << '\n';
    return 0;
  }
  const auto r = run_experiment(c, progress_sink(o));
  std::cout << summary(c, r).dump(2) << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  auto c = resolve(o, std::nullopt, ExperimentKind::BanditTable1);
  if (!c.is_bandit_evaluation()) throw ConfigError("train expects a bandit experiment config");
  if (o.dry_run) return run_or_plan(o, c);
  const auto tasks = train_tasks(c, c.train_learner);
  const auto dir = std::filesystem::path(c.output_dir) / c.name;
  json models = json::array();
  for (const auto& id : c.principals) {
    if (!is_learned_principal(id)) continue;
    for (auto s : c.seeds) {
      const auto tp = train_principal(c, id, s, tasks, progress_sink(o));
      const auto path = model_path(dir.string(), id, s);
      save_model(tp, path);
      write_text(dir / id / ("train_log_seed" + std::to_string(s) + ".csv"), learning::log_to_csv(tp.log));
      models.push_back({{"principal", id}, {"seed", s}, {"path", path.string()},
                        {"final_score", tp.log.empty() ? 0.0 : tp.log.back().mean_score}});
    }
  }
  std::cout << json{{"status", "ok"}, {"config_hash", hex64(config_hash(c))}, {"models", models}}.dump(2) << '\n';
  return 0;
}

int cmd_adapt(const CommonOptions& o, const std::string& principal_id, int task_index, int k) {
  auto c = resolve(o, std::nullopt, ExperimentKind::BanditTable1);
  if (c.checkpoint_dir.empty()) throw ConfigError("adapt needs --checkpoint");
  if (c.test_learners.empty()) throw ConfigError("adapt needs a test learner");
  const auto tasks = test_tasks(c, c.test_learners.front());
  if (task_index < 0 || task_index >= static_cast<int>(tasks.size()))
    throw ConfigError("task index out of range");
  recipe(principal_id);
  if (o.dry_run) {
    std::cout << json{{"status", "ok"}, {"dry_run", true},
                      {"plan", {"load " + model_path(c.checkpoint_dir, principal_id, c.seeds.front()).string()}}}.dump(2)
              << '\n';
    return 0;
  }
  json out = json::array();
  for (auto s : c.seeds) {
    const auto m = load_model(model_path(c.checkpoint_dir, principal_id, s));
    const auto& task = tasks[static_cast<std::size_t>(task_index)];
    const Rng rng = Rng(eval_seed(s, static_cast<std::size_t>(task_index)));
    const auto theta = learning::k_shot_adapt(m.net, m.theta, m.wm, task, k, c.train.inner_lr, c.alpha, c.gamma,
                                              c.horizon, rng.split(1));
    auto adapted = m;
    adapted.theta = theta;
    const auto path = std::filesystem::path(c.output_dir) / c.name / principal_id /
                      ("adapted_seed" + std::to_string(s) + "_task" + std::to_string(task_index) + "_k" +
                       std::to_string(k) + ".json");
    save_model(adapted, path);
    const auto ev = learning::evaluate_learned(m.net, m.theta, m.wm, task, k, c.train.inner_lr, c.horizon, c.alpha,
                                               c.gamma, {eval_seed(s, static_cast<std::size_t>(task_index))},
                                               principal_id);
    out.push_back({{"seed", s}, {"path", path.string()}, {"score", ev.mean}});
  }
  std::cout << json{{"status", "ok"}, {"adapted", out}}.dump(2) << '\n';
  return 0;
}

int cmd_eval(CommonOptions o) {
  auto c = resolve(o, std::nullopt, ExperimentKind::BanditTable1);
  if (!c.is_bandit_evaluation()) throw ConfigError("eval expects a bandit experiment config");
  c.train_enabled = false;
  c.validate();
  return run_or_plan(o, c);
}

int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto table = results_from_csv(read_text(fs::path(dir) / "results.csv"));
  const auto manifest = json::parse(read_text(fs::path(dir) / "manifest.json"));
  std::cout << "experiment " << manifest.value("experiment", "?") << " (" << manifest.value("kind", "?")
            << "), config " << manifest.value("config_hash", "?") << "\n";
  std::vector<std::string> cols;
  std::map<std::string, std::map<std::string, const ResultCell*>> rows;
  std::vector<std::string> order;
  bool omitted = false;
  for (const auto& c : table.cells) {
    if (std::find(cols.begin(), cols.end(), c.test_spec) == cols.end()) cols.push_back(c.test_spec);
    const auto key = c.principal + " (" + std::to_string(c.k) + ") " + c.train_spec;
    omitted = omitted || c.reference_omitted;
    if (!rows.count(key)) order.push_back(key);
    rows[key][c.test_spec] = &c;
  }
  std::cout << std::left << std::setw(34) << "principal (K) train";
  for (const auto& col : cols) std::cout << std::setw(20) << col;
  std::cout << '\n';
  for (const auto& key : order) {
    std::cout << std::setw(34) << key;
    for (const auto& col : cols) {
      const auto it = rows[key].find(col);
      char buf[64] = "";
      if (it != rows[key].end())
        std::snprintf(buf, sizeof buf, "%.2f (%.2f)%s", it->second->mean, it->second->se,
                      it->second->reference_omitted ? "*" : "");
      std::cout << std::setw(20) << buf;
    }
    std::cout << '\n';
  }
  if (omitted) std::cout << "* cell omitted from the reference table\n";
  return 0;
}

int fail(const std::string& kind, const std::string& message) {
  std::cout << json{{"status", "error"}, {"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware reward-intervention experiments"};
  app.require_subcommand(1);
  CommonOptions o;
  std::string principal_id = "MERMAIDE";
  int task_index = 0;
  int k = 1;
  std::string setting = "single";
  std::string report_dir;

  auto* train = app.add_subcommand("train", "Train the learned principals of a bandit config");
  auto* adapt = app.add_subcommand("adapt", "K-shot adapt a trained principal to one test task");
  auto* eval = app.add_subcommand("eval", "Evaluate trained principals from --checkpoint");
  auto* table1 = app.add_subcommand("table1", "Train and evaluate across UCB learners");
  auto* table2 = app.add_subcommand("table2", "Train on one algorithm, evaluate on the other");
  auto* table4 = app.add_subcommand("table4", "Exploration counts of the learner grids");
  auto* b3 = app.add_subcommand("b3", "Behavior characterization on the fixed reward vectors");
  auto* sb = app.add_subcommand("stackelberg", "Stackelberg sweep with MAML and RL");
  auto* report = app.add_subcommand("report", "Print a results directory as a table");
  for (auto* cmd : {train, adapt, eval, table1, table2, table4, b3, sb}) add_common(cmd, o);
  adapt->add_option("--principal", principal_id, "Learned principal id");
  adapt->add_option("--task", task_index, "Test task index");
  adapt->add_option("-k,--k", k, "Adaptation steps");
  sb->add_option("--setting", setting, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  report->add_option("dir", report_dir, "Experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*train) return cmd_train(o);
    if (*adapt) return cmd_adapt(o, principal_id, task_index, k);
    if (*eval) return cmd_eval(o);
    if (*table1) return run_or_plan(o, resolve(o, ExperimentKind::BanditTable1, ExperimentKind::BanditTable1));
    if (*table2)
      return run_or_plan(o, resolve(o, ExperimentKind::BanditTable2CrossAlgo, ExperimentKind::BanditTable2CrossAlgo));
    if (*table4) return run_or_plan(o, resolve(o, ExperimentKind::Table4Calibration, ExperimentKind::Table4Calibration));
    if (*b3) return run_or_plan(o, resolve(o, ExperimentKind::B3Characterization, ExperimentKind::B3Characterization));
    if (*sb) {
      const auto kind = setting == "multi" ? ExperimentKind::StackelbergMulti : ExperimentKind::StackelbergSingle;
      auto c = resolve(o, kind, kind);
      if (o.config.empty() || setting == "multi") c.kind = kind;
      return run_or_plan(o, c);
    }
    if (*report) return cmd_report(report_dir);
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return fail("usage", "no command");
}
