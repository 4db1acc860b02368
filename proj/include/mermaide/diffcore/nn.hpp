// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mermaide/core/error.hpp"
#include "mermaide/core/rng.hpp"
#include "mermaide/diffcore/graph.hpp"
#include "mermaide/diffcore/params.hpp"

namespace mermaide::ad {

namespace detail {
inline Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
  return m;
}
}  // namespace detail

/// Fully connected layer y = W x + b over column-batched inputs.
struct Linear {
  std::string prefix;
  int in_dim = 0;
  int out_dim = 0;

  /// Uniform(+-1/sqrt(fan_in)) weights; `zero` gives an all-zero layer.
  void init(ParamVector& p, Rng& rng, bool zero = false) const {
    if (zero) {
      p.set(prefix + ".W", Matrix::Zero(out_dim, in_dim));
      p.set(prefix + ".b", Matrix::Zero(out_dim, 1));
      return;
    }
    p.set(prefix + ".W", detail::uniform_init(out_dim, in_dim, in_dim, rng));
    p.set(prefix + ".b", detail::uniform_init(out_dim, 1, in_dim, rng));
  }

  Var operator()(const ParamVars& p, const Var& x) const {
    if (x.rows() != in_dim)
      throw ConfigError(prefix + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                        std::to_string(in_dim));
    return add_colvec(matmul(p[prefix + ".W"], x), p[prefix + ".b"]);
  }
};

/// Multi-layer GRU. Per layer:
///   z  = sigmoid(Wz x + Uz h + bz)
///   r  = sigmoid(Wr x + Ur h + br)
///   h~ = tanh(Wh x + Uh (r * h) + bh)
///   h' = (1 - z) * h + z * h~
/// Weights are stored fused: `W` is [Wz; Wr; Wh] (3H x in), `Uzr` is
/// [Uz; Ur] (2H x H), `Uh` is H x H, `b` is [bz; br; bh].
struct GruStack {
  std::string prefix;
  int input_dim = 0;
  int hidden_dim = 128;
  int layers = 2;

  std::string name(int layer, const char* part) const {
    return prefix + ".l" + std::to_string(layer) + "." + part;
  }

  void init(ParamVector& p, Rng& rng) const {
    for (int l = 0; l < layers; ++l) {
      const int in = l == 0 ? input_dim : hidden_dim;
      // fan_in of each gate pre-activation is (in + H).
      const double fan = in + hidden_dim;
      p.set(name(l, "W"), detail::uniform_init(3 * hidden_dim, in, fan, rng));
      p.set(name(l, "Uzr"), detail::uniform_init(2 * hidden_dim, hidden_dim, fan, rng));
      p.set(name(l, "Uh"), detail::uniform_init(hidden_dim, hidden_dim, fan, rng));
      p.set(name(l, "b"), detail::uniform_init(3 * hidden_dim, 1, fan, rng));
    }
  }

  std::vector<Var> zero_state(Eigen::Index batch = 1) const {
    return std::vector<Var>(static_cast<std::size_t>(layers),
                            Var::constant(Matrix::Zero(hidden_dim, batch)));
  }

  /// Advances every layer one step; returns the new per-layer hidden states.
  /// The top layer's state is the stack output.
  std::vector<Var> step(const ParamVars& p, const Var& x, const std::vector<Var>& h) const {
    if (x.rows() != input_dim)
      throw ConfigError(prefix + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                        std::to_string(input_dim));
    if (static_cast<int>(h.size()) != layers)
      throw ConfigError(prefix + ": expected " + std::to_string(layers) + " hidden states");
    std::vector<Var> out;
    out.reserve(h.size());
    Var in = x;
    const Eigen::Index H = hidden_dim;
    for (int l = 0; l < layers; ++l) {
      const Var& hp = h[static_cast<std::size_t>(l)];
      if (hp.rows() != H || hp.cols() != x.cols())
        throw ConfigError(prefix + ": hidden state shape mismatch at layer " + std::to_string(l));
      const Var gx = add_colvec(matmul(p[name(l, "W")], in), p[name(l, "b")]);
      const Var gh = matmul(p[name(l, "Uzr")], hp);
      const Var z = sigmoid(add(slice_rows(gx, 0, H), slice_rows(gh, 0, H)));
      const Var r = sigmoid(add(slice_rows(gx, H, H), slice_rows(gh, H, H)));
      const Var cand =
          tanh(add(slice_rows(gx, 2 * H, H), matmul(p[name(l, "Uh")], mul(r, hp))));
      const Var next = add(mul(affine(z, -1.0, 1.0), hp), mul(z, cand));
      out.push_back(next);
      in = next;
    }
    return out;
  }
};

/// One-hidden-layer ReLU MLP.
struct Mlp {
  std::string prefix;
  int input_dim = 1;
  int hidden_dim = 32;
  int output_dim = 1;

  Linear hidden() const { return {prefix + ".hidden", input_dim, hidden_dim}; }
  Linear output() const { return {prefix + ".out", hidden_dim, output_dim}; }

  void init(ParamVector& p, Rng& rng) const {
    hidden().init(p, rng);
    output().init(p, rng);
  }
  Var operator()(const ParamVars& p, const Var& x) const {
    return output()(p, relu(hidden()(p, x)));
  }
};

/// Column-batched one-hot encoding; index < 0 encodes "none" as all zeros.
inline Matrix one_hot(int index, int size) {
  Matrix m = Matrix::Zero(size, 1);
  if (index >= 0) {
    if (index >= size) throw ConfigError("one_hot: index out of range");
    m(index, 0) = 1.0;
  }
  return m;
}

}  // namespace mermaide::ad
