// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mermaide {

/// Base class for every error raised by the library. `kind()` is the
/// machine-readable tag the CLI reports in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Invalid configuration: bad shapes, unknown identifiers, out-of-range knobs.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

/// API misuse, e.g. asking for the gradient of a non-scalar.
struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

/// A runtime invariant was violated (non-finite gradient, zero probability...).
struct InvariantError : Error {
  explicit InvariantError(const std::string& what) : Error("invariant", what) {}
};

/// Differentiating through a primitive that has no derivative rule.
struct UnsupportedOpError : Error {
  explicit UnsupportedOpError(const std::string& what) : Error("unsupported_op", what) {}
};

/// Filesystem and parse failures, always carrying the offending path.
struct IoError : Error {
  IoError(const std::string& path, const std::string& what)
      : Error("io", path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace mermaide
