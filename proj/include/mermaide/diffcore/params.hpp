// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mermaide/core/error.hpp"
#include "mermaide/diffcore/graph.hpp"

namespace mermaide::ad {

/// Named real-valued arrays (policy or world-model parameters). Entries are
/// kept in name order so iteration, flattening and checksums are stable.
class ParamVector {
 public:
  using Map = std::map<std::string, Matrix>;

  ParamVector() = default;

  void set(const std::string& name, Matrix value) { entries_[name] = std::move(value); }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Matrix& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  Matrix& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, m] : entries_) n += static_cast<std::size_t>(m.size());
    return n;
  }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

  /// Identical names and shapes.
  bool compatible(const ParamVector& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b)
      if (a->first != b->first || a->second.rows() != b->second.rows() ||
          a->second.cols() != b->second.cols())
        return false;
    return true;
  }
  void require_compatible(const ParamVector& other, const char* what) const {
    if (!compatible(other))
      throw ConfigError(std::string(what) + ": parameter sets differ in names or shapes");
  }

  ParamVector zeros_like() const {
    ParamVector out;
    for (const auto& [k, m] : entries_) out.set(k, Matrix::Zero(m.rows(), m.cols()));
    return out;
  }

  bool all_finite() const {
    for (const auto& [_, m] : entries_)
      if (!m.allFinite()) return false;
    return true;
  }

  /// this += s * other
  ParamVector& axpy(double s, const ParamVector& other) {
    require_compatible(other, "axpy");
    auto b = other.entries_.begin();
    for (auto& [k, m] : entries_) (m += s * (b++)->second);
    return *this;
  }
  ParamVector& operator+=(const ParamVector& o) { return axpy(1.0, o); }
  ParamVector& operator-=(const ParamVector& o) { return axpy(-1.0, o); }
  ParamVector& operator*=(double s) {
    for (auto& [_, m] : entries_) m *= s;
    return *this;
  }
  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(ParamVector a, double s) { return a *= s; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }

  double dot(const ParamVector& other) const {
    require_compatible(other, "dot");
    double acc = 0.0;
    auto b = other.entries_.begin();
    for (const auto& [_, m] : entries_) acc += m.cwiseProduct((b++)->second).sum();
    return acc;
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double max_abs_diff(const ParamVector& other) const {
    require_compatible(other, "max_abs_diff");
    double d = 0.0;
    auto b = other.entries_.begin();
    for (const auto& [_, m] : entries_) d = std::max(d, (m - (b++)->second).cwiseAbs().maxCoeff());
    return d;
  }

  /// FNV-1a over names, shapes and raw bytes; equal iff bitwise-equal content.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& [k, m] : entries_) {
      mix(k.data(), k.size());
      const std::int64_t shape[2] = {m.rows(), m.cols()};
      mix(shape, sizeof shape);
      mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
    return h;
  }

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.compatible(b) && a.checksum() == b.checksum();
  }

 private:
  Map entries_;
};

/// Graph-side view of a parameter set: one Var per entry. Leaves are created
/// for parameters being differentiated; adapted parameters (after an inner
/// gradient step) are ordinary op outputs.
class ParamVars {
 public:
  static ParamVars leaves(const ParamVector& p) {
    ParamVars out;
    for (const auto& [k, m] : p) out.vars_.emplace(k, Var::leaf(m));
    return out;
  }
  static ParamVars constants(const ParamVector& p) {
    ParamVars out;
    for (const auto& [k, m] : p) out.vars_.emplace(k, Var::constant(m));
    return out;
  }

  const Var& operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  void set(const std::string& name, Var v) { vars_[name] = std::move(v); }
  std::size_t size() const { return vars_.size(); }
  auto begin() const { return vars_.begin(); }
  auto end() const { return vars_.end(); }

  std::vector<Var> list() const {
    std::vector<Var> out;
    out.reserve(vars_.size());
    for (const auto& [_, v] : vars_) out.push_back(v);
    return out;
  }
  ParamVector values() const {
    ParamVector out;
    for (const auto& [k, v] : vars_) out.set(k, v.value());
    return out;
  }

 private:
  std::map<std::string, Var> vars_;
};

/// Gradient of a scalar w.r.t. every parameter; parameters the output does
/// not depend on receive zeros.
inline ParamVector grad(const Var& output, const ParamVars& params) {
  const auto g = Tape(output).gradients(params.list(), false);
  ParamVector out;
  std::size_t i = 0;
  for (const auto& [k, _] : params) out.set(k, g[i++].value());
  return out;
}

/// Differentiable gradient (create_graph) keyed by parameter name.
inline ParamVars grad_vars(const Var& output, const ParamVars& params) {
  const auto g = Tape(output).gradients(params.list(), true);
  ParamVars out;
  std::size_t i = 0;
  for (const auto& [k, _] : params) out.set(k, g[i++]);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format (JSON):
//   {"format": "mermaide.params", "version": 1,
//    "entries": [{"name": str, "rows": int, "cols": int, "data": [column-major doubles]}]}
// ---------------------------------------------------------------------------

inline constexpr int kParamFormatVersion = 1;

inline nlohmann::json to_json(const ParamVector& p) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [k, m] : p) {
    std::vector<double> data(m.data(), m.data() + m.size());
    entries.push_back({{"name", k}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
  }
  return {{"format", "mermaide.params"}, {"version", kParamFormatVersion}, {"entries", entries}};
}

inline ParamVector params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mermaide.params")
    throw ConfigError("not a mermaide.params document");
  if (j.value("version", -1) != kParamFormatVersion)
    throw ConfigError("unsupported params version " + std::to_string(j.value("version", -1)));
  ParamVector out;
  for (const auto& e : j.at("entries")) {
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw ConfigError("param '" + e.at("name").get<std::string>() + "': data size mismatch");
    Matrix m(rows, cols);
    std::memcpy(m.data(), data.data(), sizeof(double) * data.size());
    out.set(e.at("name").get<std::string>(), std::move(m));
  }
  return out;
}

inline void save_params(const ParamVector& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError(path, "cannot open for writing");
  f << to_json(p).dump();
  if (!f) throw IoError(path, "write failed");
}

inline ParamVector load_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path, "cannot open for reading");
  try {
    return params_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, e.what());
  }
}

}  // namespace mermaide::ad
