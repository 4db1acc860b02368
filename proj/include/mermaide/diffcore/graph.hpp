// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mermaide/core/error.hpp"

namespace mermaide::ad {

using Matrix = Eigen::MatrixXd;

class Var;
class GradSink;
struct Node;
using NodePtr = std::shared_ptr<Node>;

namespace detail {
inline thread_local bool grad_enabled = true;
}  // namespace detail

/// Disables graph recording on the current thread for its lifetime. Ops
/// executed under the guard produce constants.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Re-enables recording inside a NoGradGuard scope (used by create_graph backward).
class EnableGradGuard {
 public:
  EnableGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = true; }
  ~EnableGradGuard() { detail::grad_enabled = previous_; }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

using ForwardFn = std::function<Matrix(const std::vector<const Matrix*>&)>;
using BackwardFn = std::function<void(const Node&, const Var&, GradSink&)>;

/// One recorded primitive. Leaves have no parents and no backward rule;
/// a non-leaf without a backward rule is non-differentiable.
struct Node : std::enable_shared_from_this<Node> {
  Matrix value;
  std::vector<NodePtr> parents;
  ForwardFn forward;
  BackwardFn backward;
  bool requires_grad = false;
  const char* op = "const";

  Var input(std::size_t i) const;
  Var self() const;
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }
  /// A differentiable input.
  static Var leaf(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->op = "leaf";
    return Var(std::move(n));
  }

  bool valid() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const {
    if (rows() != 1 || cols() != 1) throw UsageError("item() on a non-scalar Var");
    return node_->value(0, 0);
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Var detach() const { return constant(node_->value); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

inline Var Node::input(std::size_t i) const { return Var(parents.at(i)); }

/// Receives gradient contributions for the parents of the node being
/// back-propagated. `add_outer` records `left * right^T` lazily so that the
/// per-step contributions to a shared weight collapse into one product.
class GradSink {
 public:
  struct Accum {
    std::vector<Var> terms;
    std::vector<Var> lefts;
    std::vector<Var> rights;
    bool empty() const { return terms.empty() && lefts.empty(); }
  };

  GradSink(const Node& node, std::unordered_map<const Node*, Accum>& accums)
      : node_(node), accums_(accums) {}

  bool needs(std::size_t i) const { return node_.parents.at(i)->requires_grad; }
  void add(std::size_t i, Var g) {
    if (!needs(i)) return;
    accums_[node_.parents[i].get()].terms.push_back(std::move(g));
  }
  void add_outer(std::size_t i, Var left, Var right) {
    if (!needs(i)) return;
    auto& a = accums_[node_.parents[i].get()];
    a.lefts.push_back(std::move(left));
    a.rights.push_back(std::move(right));
  }

 private:
  const Node& node_;
  std::unordered_map<const Node*, Accum>& accums_;
};

/// Creates an op node. The forward is evaluated immediately; parents and the
/// backward rule are retained only when recording is on and some input
/// requires a gradient.
inline Var make_op(const char* name, std::vector<Var> inputs, ForwardFn forward,
                   BackwardFn backward) {
  std::vector<const Matrix*> values;
  values.reserve(inputs.size());
  bool needs_grad = false;
  for (const auto& in : inputs) {
    values.push_back(&in.value());
    needs_grad = needs_grad || in.requires_grad();
  }
  auto n = std::make_shared<Node>();
  n->value = forward(values);
  n->op = name;
  if (needs_grad && grad_enabled()) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->forward = std::move(forward);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline Var Node::self() const {
  return Var(std::const_pointer_cast<Node>(shared_from_this()));
}

namespace detail {
inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive ops. Every backward rule is written in terms of these ops, so the
// backward pass can itself be recorded (second-order gradients).
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
inline Var add(const Var& a, const Var& b);
inline Var sub(const Var& a, const Var& b);
inline Var mul(const Var& a, const Var& b);
inline Var affine(const Var& x, double scale, double shift);
inline Var add_colvec(const Var& x, const Var& v);
inline Var sum_cols(const Var& x);
inline Var broadcast_cols(const Var& v, Eigen::Index cols);
inline Var sum_rows(const Var& x);
inline Var broadcast_rows(const Var& v, Eigen::Index rows);
inline Var sum_all(const Var& x);
inline Var fill(const Var& s, Eigen::Index rows, Eigen::Index cols);
inline Var add_n(const std::vector<Var>& xs);
inline Var hcat(const std::vector<Var>& xs);
inline Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index n);
inline Var embed_cols(const Var& x, Eigen::Index start, Eigen::Index total);
inline Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index n);
inline Var embed_rows(const Var& x, Eigen::Index start, Eigen::Index total);
inline Var sigmoid(const Var& x);
inline Var tanh(const Var& x);
inline Var relu(const Var& x);
inline Var exp(const Var& x);
inline Var reciprocal(const Var& x);
inline Var log(const Var& x);
inline Var log_sigmoid(const Var& x);
inline Var log_softmax(const Var& x);
inline Var softmax(const Var& x);
inline Var argmax_one_hot(const Var& x);

inline Var scale(const Var& x, double s) { return affine(x, s, 0.0); }
inline Var neg(const Var& x) { return affine(x, -1.0, 0.0); }

inline Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
  const auto ar = ta ? a.cols() : a.rows(), ac = ta ? a.rows() : a.cols();
  const auto br = tb ? b.cols() : b.rows();
  if (ac != br)
    throw ConfigError("matmul: inner dimension mismatch (" + std::to_string(ar) + "x" +
                      std::to_string(ac) + " * " + std::to_string(br) + "x...)");
  return make_op(
      "matmul", {a, b},
      [ta, tb](const std::vector<const Matrix*>& in) -> Matrix {
        const Matrix& x = *in[0];
        const Matrix& y = *in[1];
        if (!ta && !tb) return x * y;
        if (ta && !tb) return x.transpose() * y;
        if (!ta && tb) return x * y.transpose();
        return x.transpose() * y.transpose();
      },
      [ta, tb](const Node& self, const Var& g, GradSink& sink) {
        const Var A = self.input(0), B = self.input(1);
        if (sink.needs(0)) {
          if (!ta && !tb)
            sink.add_outer(0, g, B);
          else if (!ta)
            sink.add(0, matmul(g, B, false, false));
          else
            sink.add(0, matmul(B, g, tb, true));
        }
        if (sink.needs(1)) {
          if (!tb)
            sink.add(1, matmul(A, g, !ta, false));
          else
            sink.add(1, matmul(g, A, true, ta));
        }
      });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  return make_op(
      "add", {a, b},
      [](const std::vector<const Matrix*>& in) -> Matrix { return *in[0] + *in[1]; },
      [](const Node&, const Var& g, GradSink& sink) {
        sink.add(0, g);
        sink.add(1, g);
      });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  return make_op(
      "sub", {a, b},
      [](const std::vector<const Matrix*>& in) -> Matrix { return *in[0] - *in[1]; },
      [](const Node&, const Var& g, GradSink& sink) {
        sink.add(0, g);
        if (sink.needs(1)) sink.add(1, neg(g));
      });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  return make_op(
      "mul", {a, b},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->cwiseProduct(*in[1]);
      },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, mul(g, self.input(1)));
        if (sink.needs(1)) sink.add(1, mul(g, self.input(0)));
      });
}

inline Var affine(const Var& x, double s, double shift) {
  return make_op(
      "affine", {x},
      [s, shift](const std::vector<const Matrix*>& in) -> Matrix {
        return (s * in[0]->array() + shift).matrix();
      },
      [s](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, s == 1.0 ? g : affine(g, s, 0.0));
      });
}

inline Var add_colvec(const Var& x, const Var& v) {
  if (v.cols() != 1 || v.rows() != x.rows())
    throw ConfigError("add_colvec: bias must be a column vector matching rows");
  return make_op(
      "add_colvec", {x, v},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->colwise() + in[1]->col(0);
      },
      [](const Node& self, const Var& g, GradSink& sink) {
        sink.add(0, g);
        if (sink.needs(1)) sink.add(1, self.input(0).cols() == 1 ? g : sum_cols(g));
      });
}

inline Var sum_cols(const Var& x) {
  const auto cols = x.cols();
  return make_op(
      "sum_cols", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->rowwise().sum(); },
      [cols](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, broadcast_cols(g, cols));
      });
}

inline Var broadcast_cols(const Var& v, Eigen::Index cols) {
  if (v.cols() != 1) throw ConfigError("broadcast_cols: expects a column vector");
  return make_op(
      "broadcast_cols", {v},
      [cols](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->replicate(1, cols);
      },
      [](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, sum_cols(g));
      });
}

inline Var sum_rows(const Var& x) {
  const auto rows = x.rows();
  return make_op(
      "sum_rows", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->colwise().sum(); },
      [rows](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, broadcast_rows(g, rows));
      });
}

inline Var broadcast_rows(const Var& v, Eigen::Index rows) {
  if (v.rows() != 1) throw ConfigError("broadcast_rows: expects a row vector");
  return make_op(
      "broadcast_rows", {v},
      [rows](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->replicate(rows, 1);
      },
      [](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, sum_rows(g));
      });
}

inline Var sum_all(const Var& x) {
  const auto rows = x.rows(), cols = x.cols();
  return make_op(
      "sum_all", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        return Matrix::Constant(1, 1, in[0]->sum());
      },
      [rows, cols](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, fill(g, rows, cols));
      });
}

inline Var fill(const Var& s, Eigen::Index rows, Eigen::Index cols) {
  if (s.rows() != 1 || s.cols() != 1) throw ConfigError("fill: expects a scalar");
  return make_op(
      "fill", {s},
      [rows, cols](const std::vector<const Matrix*>& in) -> Matrix {
        return Matrix::Constant(rows, cols, (*in[0])(0, 0));
      },
      [](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, sum_all(g));
      });
}

inline Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw UsageError("add_n: empty input");
  if (xs.size() == 1) return xs.front();
  for (const auto& x : xs) detail::require_same_shape(xs.front(), x, "add_n");
  return make_op(
      "add_n", xs,
      [](const std::vector<const Matrix*>& in) -> Matrix {
        Matrix out = *in[0];
        for (std::size_t i = 1; i < in.size(); ++i) out += *in[i];
        return out;
      },
      [n = xs.size()](const Node&, const Var& g, GradSink& sink) {
        for (std::size_t i = 0; i < n; ++i) sink.add(i, g);
      });
}

inline Var hcat(const std::vector<Var>& xs) {
  if (xs.empty()) throw UsageError("hcat: empty input");
  if (xs.size() == 1) return xs.front();
  std::vector<Eigen::Index> offsets;
  Eigen::Index total = 0;
  for (const auto& x : xs) {
    if (x.rows() != xs.front().rows()) throw ConfigError("hcat: row mismatch");
    offsets.push_back(total);
    total += x.cols();
  }
  return make_op(
      "hcat", xs,
      [total](const std::vector<const Matrix*>& in) -> Matrix {
        Matrix out(in[0]->rows(), total);
        Eigen::Index c = 0;
        for (const auto* m : in) {
          out.middleCols(c, m->cols()) = *m;
          c += m->cols();
        }
        return out;
      },
      [offsets](const Node& self, const Var& g, GradSink& sink) {
        for (std::size_t i = 0; i < offsets.size(); ++i)
          if (sink.needs(i)) sink.add(i, slice_cols(g, offsets[i], self.parents[i]->value.cols()));
      });
}

inline Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index n) {
  const auto total = x.cols();
  if (start < 0 || n < 0 || start + n > total) throw ConfigError("slice_cols: out of range");
  return make_op(
      "slice_cols", {x},
      [start, n](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->middleCols(start, n);
      },
      [start, total](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, embed_cols(g, start, total));
      });
}

inline Var embed_cols(const Var& x, Eigen::Index start, Eigen::Index total) {
  const auto n = x.cols();
  if (start < 0 || start + n > total) throw ConfigError("embed_cols: out of range");
  return make_op(
      "embed_cols", {x},
      [start, total](const std::vector<const Matrix*>& in) -> Matrix {
        Matrix out = Matrix::Zero(in[0]->rows(), total);
        out.middleCols(start, in[0]->cols()) = *in[0];
        return out;
      },
      [start, n](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, slice_cols(g, start, n));
      });
}

inline Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index n) {
  const auto total = x.rows();
  if (start < 0 || n < 0 || start + n > total) throw ConfigError("slice_rows: out of range");
  return make_op(
      "slice_rows", {x},
      [start, n](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->middleRows(start, n);
      },
      [start, total](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, embed_rows(g, start, total));
      });
}

inline Var embed_rows(const Var& x, Eigen::Index start, Eigen::Index total) {
  const auto n = x.rows();
  if (start < 0 || start + n > total) throw ConfigError("embed_rows: out of range");
  return make_op(
      "embed_rows", {x},
      [start, total](const std::vector<const Matrix*>& in) -> Matrix {
        Matrix out = Matrix::Zero(total, in[0]->cols());
        out.middleRows(start, in[0]->rows()) = *in[0];
        return out;
      },
      [start, n](const Node&, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, slice_rows(g, start, n));
      });
}

inline Var sigmoid(const Var& x) {
  return make_op(
      "sigmoid", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->unaryExpr([](double v) {
          if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
          const double e = std::exp(v);
          return e / (1.0 + e);
        });
      },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (!sink.needs(0)) return;
        const Var y = self.self();
        sink.add(0, mul(g, mul(y, affine(y, -1.0, 1.0))));
      });
}

inline Var tanh(const Var& x) {
  return make_op(
      "tanh", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->array().tanh().matrix(); },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (!sink.needs(0)) return;
        const Var y = self.self();
        sink.add(0, mul(g, affine(mul(y, y), -1.0, 1.0)));
      });
}

inline Var relu(const Var& x) {
  return make_op(
      "relu", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->cwiseMax(0.0); },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (!sink.needs(0)) return;
        const Matrix mask =
            self.parents[0]->value.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        sink.add(0, mul(g, Var::constant(mask)));
      });
}

inline Var exp(const Var& x) {
  return make_op(
      "exp", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->array().exp().matrix(); },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, mul(g, self.self()));
      });
}

inline Var reciprocal(const Var& x) {
  return make_op(
      "reciprocal", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->cwiseInverse(); },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (!sink.needs(0)) return;
        const Var y = self.self();
        sink.add(0, neg(mul(g, mul(y, y))));
      });
}

inline Var log(const Var& x) {
  return make_op(
      "log", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix { return in[0]->array().log().matrix(); },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, mul(g, reciprocal(self.input(0))));
      });
}

/// log(sigmoid(x)) evaluated without overflow; d/dx = sigmoid(-x).
inline Var log_sigmoid(const Var& x) {
  return make_op(
      "log_sigmoid", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        return in[0]->unaryExpr([](double v) {
          return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
        });
      },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (sink.needs(0)) sink.add(0, mul(g, sigmoid(neg(self.input(0)))));
      });
}

/// Column-wise log-softmax with max subtraction.
inline Var log_softmax(const Var& x) {
  return make_op(
      "log_softmax", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        Matrix out(in[0]->rows(), in[0]->cols());
        for (Eigen::Index c = 0; c < in[0]->cols(); ++c) {
          const auto col = in[0]->col(c);
          const double m = col.maxCoeff();
          const double lse = m + std::log((col.array() - m).exp().sum());
          out.col(c) = col.array() - lse;
        }
        return out;
      },
      [](const Node& self, const Var& g, GradSink& sink) {
        if (!sink.needs(0)) return;
        const Var y = self.self();
        const Var p = exp(y);
        sink.add(0, sub(g, mul(p, broadcast_rows(sum_rows(g), y.rows()))));
      });
}

inline Var softmax(const Var& x) { return exp(log_softmax(x)); }

/// Non-differentiable: gradients through this op raise UnsupportedOpError.
inline Var argmax_one_hot(const Var& x) {
  return make_op(
      "argmax_one_hot", {x},
      [](const std::vector<const Matrix*>& in) -> Matrix {
        Matrix out = Matrix::Zero(in[0]->rows(), in[0]->cols());
        for (Eigen::Index c = 0; c < in[0]->cols(); ++c) {
          Eigen::Index r = 0;
          in[0]->col(c).maxCoeff(&r);
          out(r, c) = 1.0;
        }
        return out;
      },
      nullptr);
}

// ---------------------------------------------------------------------------
// Tape and reverse sweep.
// ---------------------------------------------------------------------------

/// The recorded sub-graph reachable from a scalar output, in topological
/// order (parents before children).
class Tape {
 public:
  explicit Tape(Var output) : output_(std::move(output)) {
    if (!output_.valid()) throw UsageError("Tape: invalid output");
    if (!output_.requires_grad()) return;
    std::unordered_map<const Node*, bool> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(output_.node().get(), 0);
    seen[output_.node().get()] = true;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && !seen[p]) {
          seen[p] = true;
          stack.emplace_back(p, 0);
        }
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  const Var& output() const { return output_; }
  const std::vector<Node*>& nodes() const { return order_; }

  /// Recomputes every non-leaf value from its parents and returns the
  /// output value. Identical inputs give bit-identical results.
  Matrix replay() const {
    for (Node* n : order_) {
      if (n->parents.empty() || !n->forward) continue;
      std::vector<const Matrix*> in;
      in.reserve(n->parents.size());
      for (const auto& p : n->parents) in.push_back(&p->value);
      n->value = n->forward(in);
    }
    return output_.value();
  }

  /// Number of nodes whose backward rule ran in the most recent sweep.
  std::size_t last_backward_visits() const { return visits_; }

  std::vector<Var> gradients(const std::vector<Var>& inputs, bool create_graph) const;

 private:
  Var output_;
  std::vector<Node*> order_;
  mutable std::size_t visits_ = 0;
};

namespace detail {
inline Var finalize(GradSink::Accum& acc) {
  std::vector<Var> parts = std::move(acc.terms);
  if (!acc.lefts.empty()) {
    if (acc.lefts.size() == 1)
      parts.push_back(matmul(acc.lefts.front(), acc.rights.front(), false, true));
    else
      parts.push_back(matmul(hcat(acc.lefts), hcat(acc.rights), false, true));
  }
  acc = {};
  return add_n(parts);
}
}  // namespace detail

inline std::vector<Var> Tape::gradients(const std::vector<Var>& inputs, bool create_graph) const {
  if (output_.rows() != 1 || output_.cols() != 1)
    throw UsageError("grad: output must be a scalar, got " + std::to_string(output_.rows()) + "x" +
                     std::to_string(output_.cols()));
  std::vector<Var> result(inputs.size());
  visits_ = 0;
  std::unordered_map<const Node*, std::size_t> wanted;
  for (std::size_t i = 0; i < inputs.size(); ++i) wanted.emplace(inputs[i].node().get(), i);

  if (output_.requires_grad()) {
    std::unique_ptr<NoGradGuard> no_grad;
    std::unique_ptr<EnableGradGuard> with_grad;
    if (create_graph)
      with_grad = std::make_unique<EnableGradGuard>();
    else
      no_grad = std::make_unique<NoGradGuard>();

    std::unordered_map<const Node*, GradSink::Accum> accums;
    accums[output_.node().get()].terms.push_back(Var::scalar(1.0));
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node* n = *it;
      auto found = accums.find(n);
      if (found == accums.end() || found->second.empty()) continue;
      Var g = detail::finalize(found->second);
      accums.erase(found);
      if (wanted.count(n)) {
        // Duplicated inputs share one gradient.
        for (std::size_t i = 0; i < inputs.size(); ++i)
          if (inputs[i].node().get() == n) result[i] = g;
      }
      if (n->parents.empty()) continue;
      if (!n->backward)
        throw UnsupportedOpError(std::string("no derivative rule for op '") + n->op + "'");
      ++visits_;
      GradSink sink(*n, accums);
      n->backward(*n, g, sink);
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!result[i].valid())
      result[i] = Var::constant(Matrix::Zero(inputs[i].rows(), inputs[i].cols()));
  return result;
}

/// d output / d inputs. With `create_graph` the returned gradients are
/// themselves differentiable (used for second-order meta-gradients).
inline std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                             bool create_graph = false) {
  return Tape(output).gradients(inputs, create_graph);
}

}  // namespace mermaide::ad
