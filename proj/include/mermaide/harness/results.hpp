// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mermaide/core/error.hpp"
#include "mermaide/env/trace.hpp"
#include "mermaide/harness/config.hpp"

namespace mermaide::harness {

/// One (principal, K, train spec) x (test spec) cell.
struct ResultCell {
  std::string principal;
  int k = 0;
  std::string train_spec;
  std::string test_spec;
  double mean = 0.0;
  double se = 0.0;
  int n_seeds = 0;
  /// The reference table prints "-" for this cell.
  bool reference_omitted = false;
  friend bool operator==(const ResultCell&, const ResultCell&) = default;
};

struct ResultsTable {
  std::vector<ResultCell> cells;

  const ResultCell* find(const std::string& principal, int k, const std::string& test_spec) const {
    for (const auto& c : cells)
      if (c.principal == principal && c.k == k && c.test_spec == test_spec) return &c;
    return nullptr;
  }
  friend bool operator==(const ResultsTable&, const ResultsTable&) = default;
};

inline constexpr const char* kResultsCsvHeader =
    "principal,k,train_spec,test_spec,mean,se,n_seeds,reference_omitted";

inline std::string results_to_csv(const ResultsTable& t) {
  std::ostringstream os;
  os.precision(17);
  os << kResultsCsvHeader << '\n';
  for (const auto& c : t.cells)
    os << c.principal << ',' << c.k << ',' << c.train_spec << ',' << c.test_spec << ',' << c.mean << ','
       << c.se << ',' << c.n_seeds << ',' << (c.reference_omitted ? 1 : 0) << '\n';
  return os.str();
}

inline ResultsTable results_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kResultsCsvHeader) throw ConfigError("results CSV: bad header");
  ResultsTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string x;
    while (std::getline(ls, x, ',')) f.push_back(x);
    if (f.size() != 8) throw ConfigError("results CSV: expected 8 fields in '" + line + "'");
    try {
      t.cells.push_back({f[0], std::stoi(f[1]), f[2], f[3], std::stod(f[4]), std::stod(f[5]), std::stoi(f[6]),
                         f[7] == "1"});
    } catch (const std::exception&) {
      throw ConfigError("results CSV: unparsable row '" + line + "'");
    }
  }
  return t;
}

inline nlohmann::json results_to_json(const ResultsTable& t) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : t.cells)
    a.push_back({{"principal", c.principal},
                 {"k", c.k},
                 {"train_spec", c.train_spec},
                 {"test_spec", c.test_spec},
                 {"mean", c.mean},
                 {"se", c.se},
                 {"n_seeds", c.n_seeds},
                 {"reference_omitted", c.reference_omitted}});
  return a;
}

/// FNV-1a over the CSV form.
inline std::uint64_t results_checksum(const ResultsTable& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : results_to_csv(t)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

/// A trace tagged with where it came from.
struct TaggedTrace {
  std::string principal;
  int k = 0;
  std::string train_spec;
  std::string test_spec;
  std::uint64_t seed = 0;
  int task = 0;
  env::EpisodeTrace trace;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw IoError(p.string(), "cannot open for writing");
  f << text;
  if (!f) throw IoError(p.string(), "write failed");
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError(p.string(), "cannot open for reading");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

/// Writes <out>/<experiment>/<principal>/<train>__<test>.{csv,json} per cell
/// group, optional traces, and manifest.json listing every artifact with the
/// config hash. `extra` artifacts (already written) are added to the manifest.
inline std::vector<std::string> emit_results(const ExperimentConfig& cfg, const ResultsTable& table,
                                             const std::vector<TaggedTrace>& traces,
                                             const std::vector<std::string>& extra = {}) {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(cfg.output_dir) / cfg.name;
  fs::create_directories(root);
  std::map<std::string, ResultsTable> groups;
  for (const auto& c : table.cells)
    groups[c.principal + "/" + c.train_spec + "__" + c.test_spec].cells.push_back(c);
  std::vector<std::string> artifacts = extra;
  for (const auto& [key, t] : groups) {
    const fs::path csv = root / (key + ".csv");
    const fs::path js = root / (key + ".json");
    write_text(csv, results_to_csv(t));
    write_text(js, results_to_json(t).dump(2));
    artifacts.push_back(fs::relative(csv, root).string());
    artifacts.push_back(fs::relative(js, root).string());
  }
  for (const auto& tt : traces) {
    const fs::path p = root / tt.principal / "traces" /
                       (tt.train_spec + "__" + tt.test_spec + "__k" + std::to_string(tt.k) + "__seed" +
                        std::to_string(tt.seed) + "__task" + std::to_string(tt.task) + ".csv");
    write_text(p, env::to_csv(tt.trace));
    artifacts.push_back(fs::relative(p, root).string());
  }
  if (!table.cells.empty()) {
    write_text(root / "results.csv", results_to_csv(table));
    artifacts.push_back("results.csv");
  }
  nlohmann::json manifest{{"experiment", cfg.name},
                          {"kind", to_string(cfg.kind)},
                          {"config_hash", hex64(config_hash(cfg))},
                          {"seeds", cfg.seeds},
                          {"results_checksum", hex64(results_checksum(table))},
                          {"config", to_json(cfg)},
                          {"artifacts", artifacts}};
  write_text(root / "manifest.json", manifest.dump(2));
  return artifacts;
}

}  // namespace mermaide::harness
