// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "fd_check.hpp"
#include "mermaide/diffcore/nn.hpp"
#include "mermaide/diffcore/optim.hpp"

using namespace mermaide;
using namespace mermaide::ad;
using fd::max_relative_error;
using fd::numeric_gradient;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
  return m;
}

ParamVector single(const std::string& name, Matrix m) {
  ParamVector p;
  p.set(name, std::move(m));
  return p;
}

/// Checks grad of a scalar function of one matrix argument against central
/// differences.
void expect_fd(const std::function<Var(const Var&)>& f, const Matrix& x, double tol = 1e-5) {
  auto p = single("x", x);
  auto vars = ParamVars::leaves(p);
  const auto analytic = grad(f(vars["x"]), vars);
  const auto numeric = numeric_gradient(
      [&](const ParamVector& q) {
        NoGradGuard ng;
        return f(Var::constant(q.at("x"))).item();
      },
      p);
  EXPECT_LT(max_relative_error(analytic, numeric), tol);
}

Var weighted_sum(const Var& y, const Matrix& w) { return sum_all(mul(y, Var::constant(w))); }

}  // namespace

TEST(Gru, ZeroParamsHalveHiddenState) {
  GruStack gru{"g", 3, 5, 2};
  Rng rng(1);
  ParamVector p;
  gru.init(p, rng);
  p *= 0.0;
  const auto vars = ParamVars::constants(p);
  std::vector<Var> h(2, Var::constant(Matrix::Ones(5, 1)));
  const auto next = gru.step(vars, Var::constant(random_matrix(3, 1, rng)), h);
  ASSERT_EQ(next.size(), 2u);
  for (const auto& v : next) EXPECT_TRUE(v.value().isApprox(Matrix::Constant(5, 1, 0.5)));
}

TEST(Gru, DeterministicStep) {
  GruStack gru{"g", 3, 4, 2};
  Rng rng(2);
  ParamVector p;
  gru.init(p, rng);
  const auto vars = ParamVars::constants(p);
  const Var x = Var::constant(random_matrix(3, 1, rng));
  const std::vector<Var> h{Var::constant(random_matrix(4, 1, rng)),
                           Var::constant(random_matrix(4, 1, rng))};
  const auto a = gru.step(vars, x, h);
  const auto b = gru.step(vars, x, h);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(a[l].value(), b[l].value());
}

TEST(Gru, ShapeMismatchIsConfigError) {
  GruStack gru{"g", 3, 4, 2};
  Rng rng(3);
  ParamVector p;
  gru.init(p, rng);
  const auto vars = ParamVars::constants(p);
  EXPECT_THROW(gru.step(vars, Var::constant(Matrix::Zero(2, 1)), gru.zero_state()), ConfigError);
  EXPECT_THROW(gru.step(vars, Var::constant(Matrix::Zero(3, 1)),
                        {Var::constant(Matrix::Zero(4, 1))}),
               ConfigError);
}

TEST(Gru, GradientMatchesFiniteDifferences) {
  GruStack gru{"g", 3, 4, 2};
  Rng rng(4);
  ParamVector p;
  gru.init(p, rng);
  const Matrix x = random_matrix(3, 1, rng);
  const Matrix h0 = random_matrix(4, 1, rng);
  auto loss = [&](const ParamVars& v) {
    const auto h = gru.step(v, Var::constant(x), {Var::constant(h0), Var::constant(h0)});
    return add(sum_all(h[0]), sum_all(h[1]));
  };
  const auto vars = ParamVars::leaves(p);
  const auto analytic = grad(loss(vars), vars);
  const auto numeric = numeric_gradient(
      [&](const ParamVector& q) {
        NoGradGuard ng;
        return loss(ParamVars::constants(q)).item();
      },
      p);
  EXPECT_LT(max_relative_error(analytic, numeric), 1e-5);
}

TEST(Grad, Quadratic) {
  auto p = single("t", Matrix::Constant(1, 1, 3.0));
  auto v = ParamVars::leaves(p);
  EXPECT_DOUBLE_EQ(grad(mul(v["t"], v["t"]), v).at("t")(0, 0), 6.0);
}

TEST(Grad, ConstantOutputHasZeroGradient) {
  auto p = single("t", Matrix::Constant(1, 1, 3.0));
  auto v = ParamVars::leaves(p);
  EXPECT_EQ(grad(Var::scalar(2.0), v).at("t")(0, 0), 0.0);
}

TEST(Grad, UntouchedParameterGetsZero) {
  ParamVector p;
  p.set("a", Matrix::Constant(2, 1, 1.0));
  p.set("b", Matrix::Constant(3, 2, 1.0));
  auto v = ParamVars::leaves(p);
  const auto g = grad(sum_all(v["a"]), v);
  EXPECT_TRUE(g.at("b").isZero());
  EXPECT_TRUE(g.at("a").isOnes());
}

TEST(Grad, NonScalarOutputIsUsageError) {
  auto p = single("t", Matrix::Ones(2, 1));
  auto v = ParamVars::leaves(p);
  EXPECT_THROW(grad(v["t"], v), UsageError);
}

TEST(Grad, NonDifferentiableOpIsUnsupported) {
  auto p = single("t", Matrix::Ones(3, 1));
  auto v = ParamVars::leaves(p);
  EXPECT_THROW(grad(sum_all(argmax_one_hot(v["t"])), v), UnsupportedOpError);
}

TEST(Grad, GruSoftmaxLossMatchesFiniteDifferences) {
  GruStack gru{"g", 4, 5, 2};
  Linear head{"head", 5, 3};
  Rng rng(5);
  ParamVector p;
  gru.init(p, rng);
  head.init(p, rng);
  std::vector<Matrix> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(random_matrix(4, 2, rng));
  auto loss = [&](const ParamVars& v) {
    auto h = gru.zero_state(2);
    std::vector<Var> terms;
    for (int t = 0; t < 3; ++t) {
      h = gru.step(v, Var::constant(xs[static_cast<std::size_t>(t)]), h);
      const Var lp = log_softmax(head(v, h.back()));
      terms.push_back(sum_all(mul(lp, Var::constant(ad::one_hot(t % 3, 3) * Matrix::Ones(1, 2)))));
    }
    return neg(add_n(terms));
  };
  const auto vars = ParamVars::leaves(p);
  const auto analytic = grad(loss(vars), vars);
  const auto numeric = numeric_gradient(
      [&](const ParamVector& q) {
        NoGradGuard ng;
        return loss(ParamVars::constants(q)).item();
      },
      p);
  EXPECT_LT(max_relative_error(analytic, numeric), 1e-5);
}

TEST(Ops, ElementwiseAndStructuralGradients) {
  Rng rng(6);
  for (int rep = 0; rep < 3; ++rep) {
    const Matrix x = random_matrix(3, 4, rng);
    const Matrix w = random_matrix(3, 4, rng);
    const Matrix pos = x.cwiseAbs().array() + 0.5;
    const Matrix other = random_matrix(4, 2, rng);
    const Matrix col = random_matrix(3, 1, rng);
    expect_fd([&](const Var& v) { return weighted_sum(sigmoid(v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(tanh(v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(exp(v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(log(v), w); }, pos);
    expect_fd([&](const Var& v) { return weighted_sum(reciprocal(v), w); }, pos);
    expect_fd([&](const Var& v) { return weighted_sum(log_sigmoid(v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(log_softmax(v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(softmax(v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(relu(v), w); }, pos);
    expect_fd([&](const Var& v) { return weighted_sum(mul(v, v), w); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(affine(v, -2.0, 0.3), w); }, x);
    expect_fd([&](const Var& v) { return sum_all(mul(matmul(v, Var::constant(other)),
                                                     matmul(v, Var::constant(other)))); }, x);
    expect_fd([&](const Var& v) { return sum_all(mul(matmul(Var::constant(other), v, true, true),
                                                     Var::constant(Matrix::Ones(2, 3)))); }, x);
    expect_fd([&](const Var& v) { return weighted_sum(add_colvec(v, Var::constant(col)), w); }, x);
    expect_fd([&](const Var& v) {
      return sum_all(mul(sum_cols(v), sum_cols(v)));
    }, x);
    expect_fd([&](const Var& v) {
      return sum_all(mul(sum_rows(v), sum_rows(v)));
    }, x);
    expect_fd([&](const Var& v) {
      return weighted_sum(hcat({slice_cols(v, 1, 2), slice_cols(v, 0, 1), slice_cols(v, 3, 1)}), w);
    }, x);
    expect_fd([&](const Var& v) {
      return weighted_sum(embed_rows(slice_rows(v, 1, 2), 1, 3), w);
    }, x);
    expect_fd([&](const Var& v) {
      return weighted_sum(embed_cols(slice_cols(v, 2, 2), 2, 4), w);
    }, x);
    expect_fd([&](const Var& v) {
      return weighted_sum(mul(broadcast_cols(slice_cols(v, 0, 1), 4),
                              broadcast_rows(slice_rows(v, 2, 1), 3)), w);
    }, x);
    expect_fd([&](const Var& v) {
      return weighted_sum(fill(sum_all(mul(v, v)), 3, 4), w);
    }, x);
  }
}

TEST(Ops, SoftmaxIsNormalizedAndPositive) {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix x = random_matrix(6, 3, rng, 50.0);
    const Matrix p = softmax(Var::constant(x)).value();
    EXPECT_TRUE((p.array() > 0.0).all());
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-9);
  }
}

TEST(Tape, ReplayIsBitIdentical) {
  Rng rng(8);
  auto p = single("x", random_matrix(3, 3, rng));
  auto v = ParamVars::leaves(p);
  const Var out = sum_all(tanh(matmul(v["x"], v["x"])));
  Tape tape(out);
  const Matrix first = out.value();
  EXPECT_EQ(tape.replay(), first);
  EXPECT_EQ(tape.replay(), first);
}

TEST(Tape, BackwardVisitsEachNodeOnce) {
  auto p = single("x", Matrix::Constant(2, 2, 0.3));
  auto v = ParamVars::leaves(p);
  const Var a = sigmoid(v["x"]);
  const Var b = mul(a, a);
  const Var out = sum_all(add(b, a));
  Tape tape(out);
  tape.gradients({v["x"]}, false);
  std::size_t non_leaf = 0;
  for (const Node* n : tape.nodes()) non_leaf += n->parents.empty() ? 0 : 1;
  EXPECT_EQ(tape.last_backward_visits(), non_leaf);
  EXPECT_EQ(non_leaf, 4u);
}

TEST(GradOfGrad, QuadraticChain) {
  auto theta = single("t", Matrix::Constant(1, 1, 1.0));
  LossBuilder sq = [](const ParamVars& v) { return mul(v["t"], v["t"]); };
  const auto g = grad_of_grad(sq, sq, theta, {0.1, 1, false});
  EXPECT_NEAR(g.at("t")(0, 0), 1.28, 1e-12);
}

TEST(GradOfGrad, ZeroInnerRateIsPlainGradient) {
  Rng rng(9);
  auto theta = single("t", random_matrix(3, 1, rng));
  LossBuilder inner = [](const ParamVars& v) { return sum_all(exp(v["t"])); };
  LossBuilder outer = [](const ParamVars& v) { return sum_all(mul(sigmoid(v["t"]), v["t"])); };
  const auto g = grad_of_grad(inner, outer, theta, {0.0, 1, false});
  const auto vars = ParamVars::leaves(theta);
  EXPECT_EQ(g, grad(outer(vars), vars));
}

TEST(GradOfGrad, LogisticMatchesFiniteDifferencesOfAdaptedLoss) {
  Rng rng(10);
  Matrix xs = random_matrix(2, 8, rng, 2.0);
  Matrix ys(1, 8);
  for (int i = 0; i < 8; ++i) ys(0, i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  Matrix xo = random_matrix(2, 8, rng, 2.0);
  auto make = [](const Matrix& x, const Matrix& y) -> LossBuilder {
    return [x, y](const ParamVars& v) {
      const Var z = matmul(v["w"], Var::constant(x));
      const Var ll = add(mul(Var::constant(y), log_sigmoid(z)),
                         mul(Var::constant((1.0 - y.array()).matrix()), log_sigmoid(neg(z))));
      return neg(sum_all(ll));
    };
  };
  const LossBuilder inner = make(xs, ys);
  const LossBuilder outer = make(xo, ys);
  const double lr = 0.3;
  for (int rep = 0; rep < 5; ++rep) {
    auto theta = single("w", random_matrix(1, 2, rng));
    const auto g = grad_of_grad(inner, outer, theta, {lr, 1, false});
    const auto numeric = numeric_gradient(
        [&](const ParamVector& q) {
          const auto v = ParamVars::leaves(q);
          const auto adapted = sgd_step(q, grad(inner(v), v), lr);
          NoGradGuard ng;
          return outer(ParamVars::constants(adapted)).item();
        },
        theta);
    EXPECT_LT(max_relative_error(g, numeric), 1e-4);
    const auto fo = grad_of_grad(inner, outer, theta, {lr, 1, true});
    EXPECT_GT(fo.max_abs_diff(g), 1e-6);
  }
}

TEST(GradOfGrad, TwoInnerStepsMatchFiniteDifferences) {
  auto theta = single("t", Matrix::Constant(2, 1, 0.4));
  theta.at("t")(1, 0) = -0.7;
  LossBuilder inner = [](const ParamVars& v) { return sum_all(mul(exp(v["t"]), v["t"])); };
  LossBuilder outer = [](const ParamVars& v) { return sum_all(tanh(mul(v["t"], v["t"]))); };
  const double lr = 0.2;
  const auto g = grad_of_grad(inner, outer, theta, {lr, 2, false});
  const auto numeric = numeric_gradient(
      [&](const ParamVector& q) {
        ParamVector cur = q;
        for (int k = 0; k < 2; ++k) {
          const auto v = ParamVars::leaves(cur);
          cur = sgd_step(cur, grad(inner(v), v), lr);
        }
        return outer(ParamVars::constants(cur)).item();
      },
      theta);
  EXPECT_LT(max_relative_error(g, numeric), 1e-4);
}

TEST(GradOfGrad, NonDifferentiableInnerIsUnsupported) {
  auto theta = single("t", Matrix::Constant(3, 1, 0.2));
  LossBuilder inner = [](const ParamVars& v) {
    return sum_all(mul(argmax_one_hot(v["t"]), v["t"]));
  };
  LossBuilder outer = [](const ParamVars& v) { return sum_all(v["t"]); };
  EXPECT_THROW(grad_of_grad(inner, outer, theta, {0.1, 1, false}), UnsupportedOpError);
}

TEST(Sgd, Examples) {
  auto p = single("p", Matrix::Constant(1, 1, 1.0));
  auto g = single("p", Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(sgd_step(p, g, 0.5).at("p")(0, 0), 0.0);
  EXPECT_EQ(sgd_step(p, g, 0.0), p);
  EXPECT_EQ(sgd_step(p, g.zeros_like(), 0.3), p);
  EXPECT_THROW(sgd_step(p, single("q", Matrix::Ones(1, 1)), 0.1), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = single("p", Matrix::Constant(1, 1, 0.0));
  auto g = single("p", Matrix::Constant(1, 1, 1.0));
  // m = 0.1, v = 0.001; corrected m/(1-0.9) = 1, v/(1-0.999) = 1 -> step lr/(1+eps).
  const double expected = -0.001 / (1.0 + 1e-8);
  auto [next, state] = adam_step(AdamState::for_params(p), p, g, {});
  EXPECT_NEAR(next.at("p")(0, 0), expected, 1e-15);
  EXPECT_EQ(state.step, 1);
  EXPECT_NEAR(state.m.at("p")(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(state.v.at("p")(0, 0), 0.001, 1e-15);
}

TEST(Adam, ZeroGradientAndDeterminism) {
  Rng rng(11);
  auto p = single("p", random_matrix(2, 2, rng));
  auto [same, s0] = adam_step(AdamState::for_params(p), p, p.zeros_like(), {});
  EXPECT_EQ(same, p);
  auto g = single("p", random_matrix(2, 2, rng));
  const auto st = AdamState::for_params(p);
  auto a = adam_step(st, p, g, {});
  auto b = adam_step(st, p, g, {});
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.m, b.second.m);
  EXPECT_THROW(adam_step(AdamState::for_params(single("q", Matrix::Ones(1, 1))), p, g, {}),
               ConfigError);
}

TEST(Params, ArithmeticCompatibility) {
  ParamVector a, b;
  a.set("x", Matrix::Ones(2, 1));
  b.set("x", Matrix::Ones(1, 2));
  EXPECT_FALSE(a.compatible(b));
  EXPECT_THROW(a += b, ConfigError);
  EXPECT_TRUE(a.compatible(a.zeros_like()));
}

TEST(Params, JsonRoundTripIsBitExact) {
  Rng rng(12);
  GruStack gru{"g", 3, 4, 2};
  ParamVector p;
  gru.init(p, rng);
  const auto path = std::filesystem::temp_directory_path() / "mermaide_params_roundtrip.json";
  save_params(p, path.string());
  const auto q = load_params(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(p.checksum(), q.checksum());
  EXPECT_THROW(load_params("/nonexistent/dir/params.json"), IoError);
}

TEST(Init, UniformWithinFanInBound) {
  Rng rng(13);
  Linear lin{"l", 16, 3};
  ParamVector p;
  lin.init(p, rng);
  EXPECT_LE(p.at("l.W").cwiseAbs().maxCoeff(), 0.25);
  ParamVector z;
  lin.init(z, rng, true);
  EXPECT_TRUE(z.at("l.W").isZero());
}
