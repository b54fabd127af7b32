#include <gtest/gtest.h>

#include <cmath>

#include "amix/autodiff.hpp"
#include "amix/error.hpp"
#include "oracles.hpp"

using namespace amix;

namespace {

Tensor grad_of(const std::function<Var(Tape&, Var)>& f, const Tensor& x) {
  Tape tape;
  Var v = tape.leaf(x);
  return tape.backward(f(tape, v))[v];
}

// Values kept away from 0 so relu/abs/clamp kinks are never straddled by
// the finite-difference probe.
Tensor kink_free(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

}  // namespace

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{0, 2}), InvalidArgument);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::scalar(1).rows(), ShapeError);
}

TEST(Tensor, GatherRowsCopiesInOrder) {
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  std::vector<std::size_t> idx{2, 0, 2};
  EXPECT_EQ(m.gather_rows(idx), Tensor::matrix({{5, 6}, {1, 2}, {5, 6}}));
}

TEST(Elementwise, Examples) {
  Tape t;
  Var a = t.constant(Tensor::vector({1, 2}));
  Var b = t.constant(Tensor::vector({3, 4}));
  EXPECT_EQ(add(a, b).value(), Tensor::vector({4, 6}));
  EXPECT_EQ(scale(t.constant(Tensor::vector({1, 2, 3})), 2.0).value(), Tensor::vector({2, 4, 6}));
  EXPECT_EQ(sub(b, a).value(), Tensor::vector({2, 2}));
  EXPECT_EQ(mul(a, b).value(), Tensor::vector({3, 8}));
}

TEST(Elementwise, MultiplyByZeroHasZeroGradient) {
  Tape t;
  Var x = t.leaf(Tensor::vector({1.5, -2.0, 3.0}));
  Var zero = t.constant(Tensor(Shape{3}, 0.0));
  Var y = mul(x, zero);
  EXPECT_EQ(y.value(), Tensor(Shape{3}, 0.0));
  EXPECT_EQ(t.backward(sum(y))[x], Tensor(Shape{3}, 0.0));
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  Tape t;
  Var a = t.constant(Tensor(Shape{2, 3}));
  Var b = t.constant(Tensor(Shape{3, 2}));
  try {
    add(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.lhs(), (Shape{2, 3}));
    EXPECT_EQ(e.rhs(), (Shape{3, 2}));
  }
}

TEST(Matmul, Examples) {
  Tape t;
  Var i2 = t.constant(Tensor::identity(2));
  Var m = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(matmul(i2, m).value(), m.value());
  Var row = t.constant(Tensor::matrix({{1, 2}}));
  Var col = t.constant(Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(matmul(row, col).value(), Tensor::matrix({{11}}));
  EXPECT_THROW(matmul(row, row), ShapeError);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.index(7), k = 1 + rng.index(7), n = 1 + rng.index(7);
    Tensor a = oracle::random_tensor({m, k}, rng), b = oracle::random_tensor({k, n}, rng);
    Tape t;
    const Tensor c = matmul(t.constant(a), t.constant(b)).value();
    const auto ref = oracle::triple_loop_matmul(oracle::to_matrix(a), oracle::to_matrix(b));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(c.at(i, j), ref[i][j], 1e-12);
  }
}

TEST(Matmul, AffineEqualsMatmulTransposePlusBias) {
  Rng rng(3);
  Tensor x = oracle::random_tensor({4, 3}, rng), w = oracle::random_tensor({5, 3}, rng);
  Tensor b = oracle::random_tensor({5}, rng);
  Tape t;
  Var vx = t.constant(x), vw = t.constant(w), vb = t.constant(b);
  const Tensor got = affine(vx, vw, vb).value();
  const Tensor want = add_row(matmul(vx, transpose(vw)), vb).value();
  EXPECT_LT(max_abs_diff(got, want), 1e-14);
}

TEST(Activations, Examples) {
  Tape t;
  EXPECT_EQ(relu(t.constant(Tensor::vector({-1, 0, 2}))).value(), Tensor::vector({0, 0, 2}));
  EXPECT_NEAR(leaky_relu(t.constant(Tensor::vector({-2})), 0.2).value()[0], -0.4, 1e-15);
  EXPECT_EQ(tanh(t.constant(Tensor::scalar(0))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(grad_of([](Tape&, Var x) { return sum(tanh(x)); }, Tensor::scalar(0)).item(), 1.0);
}

TEST(Activations, SigmoidStableAtExtremes) {
  Tape t;
  const Tensor s = sigmoid(t.constant(Tensor::vector({-800, 0, 800}))).value();
  EXPECT_TRUE(s.all_finite());
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 0.5);
  EXPECT_EQ(s[2], 1.0);
}

TEST(Activations, LogRejectsNonPositive) {
  Tape t;
  EXPECT_THROW(log(t.constant(Tensor::vector({1, 0}))), NumericError);
}

TEST(Reductions, Examples) {
  Tape t;
  EXPECT_EQ(l2_norm_sq(t.constant(Tensor::vector({3, 4}))).value().item(), 25.0);
  EXPECT_EQ(mean(t.constant(Tensor::vector({1, 2, 3}))).value().item(), 2.0);
  EXPECT_EQ(l1_norm(t.constant(Tensor::vector({-1, 2}))).value().item(), 3.0);
}

TEST(Reductions, AxisDropsDimension) {
  Tape t;
  Var m = t.constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(sum(m, 0).value(), Tensor::vector({5, 7, 9}));
  EXPECT_EQ(mean(m, 1).value(), Tensor::vector({2, 5}));
  EXPECT_THROW(sum(m, 2), InvalidArgument);
}

TEST(Backward, Examples) {
  EXPECT_EQ(grad_of([](Tape&, Var x) { return sum(x); }, Tensor::vector({1, 2, 3})), Tensor::vector({1, 1, 1}));
  EXPECT_EQ(grad_of([](Tape&, Var x) { return l2_norm_sq(x); }, Tensor::vector({1, 2})), Tensor::vector({2, 4}));
}

TEST(Backward, SharedSubexpressionAccumulates) {
  // y = x*x + x, dy/dx = 2x + 1.
  Tensor g = grad_of([](Tape&, Var x) { return sum(add(mul(x, x), x)); }, Tensor::vector({3, -1}));
  EXPECT_EQ(g, Tensor::vector({7, -1}));
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape t;
  Var x = t.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Backward, ConstantsGetNoGradient) {
  Tape t;
  Var c = t.constant(Tensor::vector({1, 2}));
  Var x = t.leaf(Tensor::vector({3, 4}));
  const Gradients g = t.backward(sum(mul(c, x)));
  EXPECT_FALSE(g.reached(c));
  EXPECT_EQ(g[c], Tensor(Shape{2}, 0.0));
  EXPECT_EQ(g[x], Tensor::vector({1, 2}));
}

TEST(GradCheck, Examples) {
  Rng rng(5);
  Tensor x = oracle::random_tensor({4}, rng);
  EXPECT_LT(grad_check([](Tape&, Var v) { return l2_norm_sq(v); }, x, 1e-5), 1e-7);

  Tensor w = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({3}, rng);
  auto tanh_affine = [&](Tape& t, Var v) { return sum(tanh(affine(v, t.constant(w), t.constant(b)))); };
  Tensor xr(Shape{1, 4}, std::vector<double>(x.storage()));
  EXPECT_LT(grad_check(tanh_affine, xr, 1e-6), 1e-5);

  Tensor kink = kink_free({6}, rng);
  EXPECT_LT(grad_check([](Tape&, Var v) { return sum(mul(relu(v), v)); }, kink, 1e-6), 1e-5);
}

TEST(GradCheck, EveryPrimitiveOnRandomProbes) {
  Rng rng(2024);
  const std::vector<std::pair<const char*, std::function<Var(Tape&, Var)>>> cases = {
      {"add", [](Tape& t, Var x) { return sum(mul(add(x, t.constant(Tensor(x.shape(), 0.4))), x)); }},
      {"sub", [](Tape&, Var x) { return l2_norm_sq(sub(x, scale(x, 0.3))); }},
      {"neg", [](Tape&, Var x) { return sum(mul(neg(x), x)); }},
      {"add_scalar", [](Tape&, Var x) { return l2_norm_sq(add_scalar(x, 0.7)); }},
      {"add_row",
       [](Tape& t, Var x) {
         Var r = t.constant(Tensor::vector({0.1, -0.2, 0.3}));
         return l2_norm_sq(add_row(x, r));
       }},
      {"scale_rows",
       [](Tape&, Var x) {
         const std::vector<double> f{0.5, -2.0};
         return l2_norm_sq(scale_rows(x, f));
       }},
      {"matmul",
       [](Tape& t, Var x) {
         Var w = t.constant(Tensor::matrix({{1, 2}, {-1, 0.5}, {0.3, 0.3}}));
         return l2_norm_sq(matmul(x, w));
       }},
      {"transpose", [](Tape&, Var x) { return l2_norm_sq(matmul(transpose(x), x)); }},
      {"affine",
       [](Tape& t, Var x) {
         Var w = t.constant(Tensor::matrix({{1, 2, 0}, {-1, 0.5, 2}}));
         Var b = t.constant(Tensor::vector({0.1, 0.2}));
         return l2_norm_sq(affine(x, w, b));
       }},
      {"relu", [](Tape&, Var x) { return sum(mul(relu(x), x)); }},
      {"leaky_relu", [](Tape&, Var x) { return sum(mul(leaky_relu(x, 0.2), x)); }},
      {"tanh", [](Tape&, Var x) { return sum(tanh(x)); }},
      {"sigmoid", [](Tape&, Var x) { return sum(sigmoid(scale(x, 3.0))); }},
      {"exp", [](Tape&, Var x) { return sum(exp(x)); }},
      {"log", [](Tape&, Var x) { return sum(log(add_scalar(mul(x, x), 0.5))); }},
      {"clamp", [](Tape&, Var x) { return sum(mul(clamp(x, -0.5, 0.5), x)); }},
      {"abs", [](Tape&, Var x) { return sum(mul(abs(x), x)); }},
      {"mean_axis", [](Tape&, Var x) { return l2_norm_sq(mean(x, 0)); }},
      {"sum_axis", [](Tape&, Var x) { return l2_norm_sq(sum(x, 1)); }},
      {"l1_norm", [](Tape&, Var x) { return l1_norm(x); }},
      {"l1_norm_axis", [](Tape&, Var x) { return l2_norm_sq(l1_norm(x, 1)); }},
      {"l2_axis", [](Tape&, Var x) { return sum(l2_norm_sq(x, 1)); }},
      {"normalize_rows",
       [](Tape& t, Var x) { return sum(mul(normalize_rows(x), t.constant(Tensor(x.shape(), 0.37)))); }},
      {"softmax_rows",
       [](Tape& t, Var x) {
         return sum(mul(softmax_rows(x), t.constant(Tensor::matrix({{1, 2, 3}, {-1, 0, 4}}))));
       }},
      {"pick",
       [](Tape&, Var x) {
         const std::vector<std::size_t> idx{2, 0};
         return l2_norm_sq(pick(x, idx));
       }},
  };
  for (const auto& [name, f] : cases) {
    for (int probe = 0; probe < 50; ++probe) {
      const Tensor x = kink_free({2, 3}, rng);
      EXPECT_LT(grad_check(f, x, 1e-6), 1e-4) << name << " probe " << probe;
    }
  }
}

TEST(GradCheck, AgreesWithIndependentFiniteDifference) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = kink_free({5}, rng);
    const Tensor g = grad_of([](Tape&, Var v) { return sum(mul(tanh(v), exp(scale(v, 0.5)))); }, x);
    const auto fd = oracle::finite_difference(
        [](const std::vector<double>& v) {
          double s = 0;
          for (double e : v) s += std::tanh(e) * std::exp(0.5 * e);
          return s;
        },
        x.storage());
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(g[i], fd[i], 1e-7);
  }
}

TEST(RowOps, SoftmaxProperties) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.index(5), n = 1 + rng.index(6);
    Tensor logits = oracle::random_tensor({m, n}, rng, -30, 30);
    Tape t;
    const Tensor p = softmax_rows(t.constant(logits)).value();
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < n; ++c) {
        EXPECT_GE(p.at(r, c), 0.0);
        s += p.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(RowOps, NormalizeRowsRejectsZeroRow) {
  Tape t;
  EXPECT_THROW(normalize_rows(t.constant(Tensor::matrix({{1, 1}, {0, 0}}))), NumericError);
}
