#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "amix/adaptivemix.hpp"
#include "amix/error.hpp"
#include "oracles.hpp"

using namespace amix;

namespace {

// Largest gap between the empirical CDF of `xs` and the uniform CDF.
double ks_uniform(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, std::abs((i + 1) / n - xs[i]));
    d = std::max(d, std::abs(xs[i] - i / n));
  }
  return d;
}

double pair_distance(const std::vector<double>& a, const std::vector<double>& b, Metric m) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += m == Metric::L1 ? std::abs(a[i] - b[i]) : (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST(SampleLambda, UniformAtAlphaOne) {
  Rng rng(1);
  const auto xs = sample_lambda(MixConfig{1.0, 0.0, Metric::SquaredL2}, 10000, rng);
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  EXPECT_NEAR(mean, 0.5, 0.02);
  EXPECT_LT(ks_uniform(xs), 0.02);
}

TEST(SampleLambda, BetaTwoTwoVariance) {
  Rng rng(2);
  const auto xs = sample_lambda(MixConfig{2.0, 0.0, Metric::SquaredL2}, 10000, rng);
  double mean = 0, var = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size();
  EXPECT_NEAR(var, 1.0 / 20.0, 0.15 / 20.0);
}

TEST(SampleLambda, MomentsForOtherAlphas) {
  Rng rng(3);
  for (double a : {0.2, 0.5, 4.0}) {
    const auto xs = sample_lambda(MixConfig{a, 0.0, Metric::SquaredL2}, 20000, rng);
    double mean = 0, var = 0;
    for (double x : xs) {
      ASSERT_GE(x, 0.0);
      ASSERT_LE(x, 1.0);
      mean += x;
    }
    mean /= xs.size();
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size();
    EXPECT_NEAR(mean, 0.5, 0.02) << a;
    EXPECT_NEAR(var, 1.0 / (4 * (2 * a + 1)), 0.1 / (4 * (2 * a + 1))) << a;
  }
}

TEST(MixConfig, Validation) {
  EXPECT_THROW((MixConfig{0.0, 0.1, Metric::L1}.validate()), InvalidArgument);
  EXPECT_THROW((MixConfig{1.0, -0.1, Metric::L1}.validate()), InvalidArgument);
  EXPECT_THROW(metric_from_string("cosine"), InvalidArgument);
  EXPECT_EQ(metric_from_string(to_string(Metric::L1)), Metric::L1);
}

TEST(MixPair, Examples) {
  const Tensor x = Tensor::vector({1, -2, 3}), y = Tensor::vector({4, 5, 6});
  EXPECT_EQ(mix_pair(x, y, 1.0), x);
  EXPECT_EQ(mix_pair(Tensor::vector({0, 0}), Tensor::vector({2, 2}), 0.5), Tensor::vector({1, 1}));
  EXPECT_LT(max_abs_diff(mix_pair(x, x, 0.3), x), 1e-15);
  EXPECT_THROW(mix_pair(x, Tensor::vector({1, 2}), 0.5), ShapeError);
  EXPECT_THROW(mix_pair(x, y, 1.5), InvalidArgument);
}

TEST(MixPair, IdenticalInputsProperty) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = oracle::random_tensor({1 + rng.index(6)}, rng, -100, 100);
    const Tensor m = mix_pair(x, x, rng.uniform());
    EXPECT_LT(max_abs_diff(m, x), 1e-12);
  }
}

TEST(AdaptiveMixLoss, ZeroForAffineFeatureMap) {
  Rng rng(4);
  for (int batch = 0; batch < 100; ++batch) {
    // Identity hidden layers keep the whole map affine at any depth.
    const std::size_t in = 1 + rng.index(4), out = 1 + rng.index(6), n = 1 + rng.index(16);
    std::vector<std::size_t> widths{in};
    for (std::size_t h = rng.index(3); h > 0; --h) widths.push_back(1 + rng.index(8));
    widths.push_back(out);
    const MlpSpec spec(widths, Activation::identity());
    Network f = init_network(spec, rng);
    for (std::size_t l = 0; l < spec.layer_count(); ++l)
      for (auto& v : f.bias(l).storage()) v = rng.uniform(-1, 1);
    const MixConfig cfg{rng.uniform(0.1, 4.0), 0.0, batch % 2 ? Metric::L1 : Metric::SquaredL2};
    Tape t;
    auto params = f.bind(t);
    Var xi = t.constant(oracle::random_tensor({n, in}, rng));
    Var xj = t.constant(oracle::random_tensor({n, in}, rng));
    const auto lambda = sample_lambda(cfg, n, rng);
    EXPECT_LT(adaptivemix_loss(f, params, xi, xj, lambda, cfg, rng).value().item(), 1e-12) << "batch " << batch;
  }
}

TEST(AdaptiveMixLoss, QuadraticFeatureClosedForm) {
  Tape t;
  Var xi = t.constant(Tensor::matrix({{0}}));
  Var xj = t.constant(Tensor::matrix({{2}}));
  const std::vector<double> lambda{0.5};
  Var xh = mix_rows(xi, xj, lambda);
  Rng rng(0);
  const MixConfig cfg{1.0, 0.0, Metric::SquaredL2};
  Var loss = adaptivemix_loss_from_features(mul(xi, xi), mul(xj, xj), mul(xh, xh), lambda, cfg, rng);
  EXPECT_NEAR(loss.value().item(), 1.0, 1e-15);
}

TEST(AdaptiveMixLoss, MatchesPairwiseLoop) {
  Rng rng(21);
  for (Metric metric : {Metric::SquaredL2, Metric::L1}) {
    MlpSpec spec({2, 6, 4}, Activation::tanh());
    Network f = init_network(spec, rng);
    const MixConfig cfg{1.0, 0.0, metric};
    const Tensor xi = oracle::random_tensor({8, 2}, rng), xj = oracle::random_tensor({8, 2}, rng);
    const auto lambda = sample_lambda(cfg, 8, rng);
    Tape t;
    auto params = f.bind(t);
    const double got = adaptivemix_loss(f, params, t.constant(xi), t.constant(xj), lambda, cfg, rng).value().item();

    std::vector<oracle::Matrix> ws;
    std::vector<std::vector<double>> bs;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      ws.push_back(oracle::to_matrix(f.weight(l)));
      bs.push_back(f.bias(l).storage());
    }
    auto feat = [&](std::vector<double> x) { return oracle::mlp_apply(ws, bs, x, [](double v) { return std::tanh(v); }); };
    double want = 0;
    for (std::size_t r = 0; r < 8; ++r) {
      const std::vector<double> a{xi.at(r, 0), xi.at(r, 1)}, b{xj.at(r, 0), xj.at(r, 1)};
      const double l = lambda[r];
      const auto fa = feat(a), fb = feat(b);
      const auto fh = feat({l * a[0] + (1 - l) * b[0], l * a[1] + (1 - l) * b[1]});
      std::vector<double> target(fa.size());
      for (std::size_t k = 0; k < fa.size(); ++k) target[k] = l * fa[k] + (1 - l) * fb[k];
      want += pair_distance(target, fh, metric);
    }
    want /= 8;
    EXPECT_NEAR(got, want, 1e-10);
  }
}

TEST(AdaptiveMixLoss, NoiseDrawsOnlyWhenSigmaPositive) {
  Rng a(5), b(5);
  Tape t;
  Var f = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const std::vector<double> lambda{0.3, 0.6};
  adaptivemix_loss_from_features(f, f, f, lambda, MixConfig{1.0, 0.0, Metric::L1}, a);
  EXPECT_EQ(a, b);
  const double noisy = adaptivemix_loss_from_features(f, f, f, lambda, MixConfig{1.0, 0.1, Metric::L1}, a).value().item();
  EXPECT_NE(a, b);
  EXPECT_GT(noisy, 0.0);
}

TEST(AdaptiveMixLoss, RejectsNonFiniteFeatures) {
  Tape t;
  Rng rng(0);
  Var ok = t.constant(Tensor::matrix({{1, 2}}));
  Var bad = t.constant(Tensor::matrix({{1, std::nan("")}}));
  const std::vector<double> lambda{0.5};
  EXPECT_THROW(adaptivemix_loss_from_features(ok, bad, ok, lambda, MixConfig{}, rng), NumericError);
}

TEST(AdaptiveMixLoss, GradientMatchesFiniteDifference) {
  Rng rng(31);
  MlpSpec spec({2, 5, 3}, Activation::tanh());
  Network f = init_network(spec, rng);
  const Tensor xj = oracle::random_tensor({4, 2}, rng);
  const MixConfig cfg{1.0, 0.0, Metric::SquaredL2};
  const auto lambda = sample_lambda(cfg, 4, rng);
  for (int probe = 0; probe < 50; ++probe) {
    const Tensor xi = oracle::random_tensor({4, 2}, rng);
    auto loss = [&](Tape& t, Var x) {
      auto params = f.bind(t);
      Rng r(0);
      return adaptivemix_loss(f, params, x, t.constant(xj), lambda, cfg, r);
    };
    EXPECT_LT(grad_check(loss, xi, 1e-6), 1e-4);
  }
}

TEST(MixedCrossEntropy, Examples) {
  Tape t;
  const std::vector<std::size_t> li{0, 2}, lj{1, 1};
  Var p = t.constant(Tensor::matrix({{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}}));
  const std::vector<double> one{1.0, 1.0};
  EXPECT_NEAR(mixed_cross_entropy(p, li, lj, one).value().item(), -(std::log(0.7) + std::log(0.6)) / 2, 1e-15);

  Var onehot = t.constant(Tensor::matrix({{1, 0, 0}, {0, 0, 1}}));
  EXPECT_NEAR(mixed_cross_entropy(onehot, li, lj, one).value().item(), 0.0, 1e-15);

  Var uniform = t.constant(Tensor(Shape{2, 3}, 1.0 / 3.0));
  const std::vector<double> lam{0.2, 0.9};
  EXPECT_NEAR(mixed_cross_entropy(uniform, li, lj, lam).value().item(), std::log(3.0), 1e-14);
}

TEST(MixedCrossEntropy, CountsClampedProbabilities) {
  Tape t;
  Var p = t.constant(Tensor::matrix({{1, 0}}));
  const std::vector<std::size_t> li{0}, lj{1};
  const std::vector<double> lam{0.5};
  std::size_t clamped = 0;
  const double v = mixed_cross_entropy(p, li, lj, lam, &clamped).value().item();
  EXPECT_EQ(clamped, 1u);
  EXPECT_NEAR(v, -0.5 * std::log(1e-12), 1e-9);
}

TEST(MixedCrossEntropy, GradientMatchesFiniteDifference) {
  Rng rng(17);
  const std::vector<std::size_t> li{0, 2, 1}, lj{1, 1, 0};
  for (int probe = 0; probe < 50; ++probe) {
    const std::vector<double> lam{rng.uniform(), rng.uniform(), rng.uniform()};
    const Tensor logits = oracle::random_tensor({3, 3}, rng, -2, 2);
    auto f = [&](Tape&, Var x) { return mixed_cross_entropy(softmax_rows(x), li, lj, lam); };
    EXPECT_LT(grad_check(f, logits, 1e-6), 1e-4);
  }
}
