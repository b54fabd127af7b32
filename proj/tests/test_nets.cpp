#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "amix/error.hpp"
#include "amix/nets.hpp"
#include "oracles.hpp"

using namespace amix;

TEST(Network, ShapesFollowWidths) {
  Network net(MlpSpec({2, 8, 1}, Activation::relu()));
  ASSERT_EQ(net.parameters().size(), 4u);
  EXPECT_EQ(net.weight(0).shape(), (Shape{8, 2}));
  EXPECT_EQ(net.weight(1).shape(), (Shape{1, 8}));
  EXPECT_EQ(net.bias(0).shape(), (Shape{8}));
  EXPECT_EQ(net.parameter_count(), 8u * 2 + 8 + 8 + 1);
  EXPECT_EQ(net.parameters()[2].name, "W1");
}

TEST(Network, SpecValidation) {
  EXPECT_THROW(MlpSpec({2}, Activation::relu()).validate(), InvalidArgument);
  EXPECT_THROW(MlpSpec({2, 0, 1}, Activation::relu()).validate(), InvalidArgument);
  MlpSpec bad({2, 4, 1}, Activation::relu());
  bad.hidden.clear();
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Network, SameSeedSameParameters) {
  MlpSpec spec({2, 16, 16, 3}, Activation::leaky_relu());
  Rng a(42), b(42), c(43);
  EXPECT_EQ(init_network(spec, a), init_network(spec, b));
  EXPECT_NE(init_network(spec, a), init_network(spec, c));
}

TEST(Network, InitScaleMatchesFanIn) {
  MlpSpec spec({400, 300, 1}, Activation::relu());
  Rng rng(1);
  Network net = init_network(spec, rng);
  const auto& w = net.weight(0).storage();
  double s2 = 0;
  for (double v : w) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / w.size()), 1.0 / std::sqrt(400.0), 0.002);
  for (double v : net.bias(0).storage()) EXPECT_EQ(v, 0.0);
}

TEST(Network, ZeroNetworkOutputsBias) {
  Network net(MlpSpec({3, 4, 2}, Activation::tanh()));
  const Tensor y = net.forward(Tensor::matrix({{1, 2, 3}, {-1, 0, 5}}));
  EXPECT_EQ(y, Tensor(Shape{2, 2}, 0.0));
}

TEST(Network, IdentityLayerPassesInputThrough) {
  Network net(MlpSpec({3, 3}, Activation::relu()));
  net.weight(0) = Tensor::identity(3);
  const Tensor x = Tensor::matrix({{1, -2, 3}});
  EXPECT_EQ(net.forward(x), x);
}

TEST(Network, ForwardMatchesLoopOracle) {
  MlpSpec spec({3, 5, 4, 2}, Activation::tanh());
  Rng rng(9);
  Network net = init_network(spec, rng);
  for (auto& p : net.parameters())
    if (p.name[0] == 'b')
      for (auto& v : p.value.storage()) v = rng.uniform(-0.5, 0.5);
  std::vector<oracle::Matrix> ws;
  std::vector<std::vector<double>> bs;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    ws.push_back(oracle::to_matrix(net.weight(l)));
    bs.push_back(net.bias(l).storage());
  }
  const Tensor x = oracle::random_tensor({6, 3}, rng);
  const Tensor y = net.forward(x);
  for (std::size_t r = 0; r < 6; ++r) {
    auto ref = oracle::mlp_apply(ws, bs, {x.row(r).begin(), x.row(r).end()}, [](double v) { return std::tanh(v); });
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(y.at(r, c), ref[c], 1e-13);
  }
}

TEST(Network, FlattenRoundTrip) {
  Rng rng(4);
  Network net = init_network(MlpSpec({2, 6, 3}, Activation::relu()), rng);
  std::vector<double> flat = net.flatten();
  Network other(net.spec());
  other.unflatten(flat);
  EXPECT_EQ(other, net);
  flat.pop_back();
  EXPECT_THROW(other.unflatten(flat), ShapeError);
}

TEST(Network, WrongInputWidthIsShapeError) {
  Network net(MlpSpec({2, 3}, Activation::relu()));
  EXPECT_THROW(net.forward(Tensor(Shape{4, 3})), ShapeError);
}

TEST(Network, ParameterGradientsMatchFiniteDifference) {
  MlpSpec spec({3, 4, 2}, Activation::tanh());
  Rng rng(12);
  Network net = init_network(spec, rng);
  const Tensor x = oracle::random_tensor({5, 3}, rng);
  Tape tape;
  auto params = net.bind(tape);
  const Gradients g = tape.backward(l2_norm_sq(net.forward(params, tape.constant(x))));
  std::vector<double> analytic;
  for (Var p : params) {
    const Tensor gp = g[p];
    analytic.insert(analytic.end(), gp.storage().begin(), gp.storage().end());
  }
  const auto fd = oracle::finite_difference(
      [&](const std::vector<double>& flat) {
        Network n2(spec);
        n2.unflatten(flat);
        double s = 0;
        const Tensor y = n2.forward(x);
        for (double v : y.storage()) s += v * v;
        return s;
      },
      net.flatten());
  ASSERT_EQ(analytic.size(), fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(analytic[i], fd[i], 1e-6 * std::max(1.0, std::abs(fd[i])));
}

TEST(Activation, StringRoundTrip) {
  for (auto a : {Activation::identity(), Activation::relu(), Activation::leaky_relu(), Activation::tanh(),
                 Activation::sigmoid()}) {
    EXPECT_EQ(activation_from_string(to_string(a)).kind, a.kind);
  }
  EXPECT_THROW(activation_from_string("swish"), InvalidArgument);
}

TEST(OrthogonalHead, Examples) {
  Rng rng(1);
  OrthogonalHead h2 = orthogonal_init(2, 2, rng);
  Tape t;
  Var w = t.constant(h2.weight);
  const Tensor wwt = matmul(w, transpose(w)).value();
  EXPECT_LT(max_abs_diff(wwt, Tensor::identity(2)), 1e-10);

  OrthogonalHead h10 = orthogonal_init(10, 64, rng);
  EXPECT_LT(h10.max_off_diagonal(), 1e-8);

  EXPECT_THROW(orthogonal_init(5, 3, rng), InvalidArgument);
}

TEST(OrthogonalHead, RowsOrthonormalProperty) {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.index(12);
    const std::size_t n = 1 + rng.index(d);
    OrthogonalHead h = orthogonal_init(n, d, rng);
    ASSERT_EQ(h.classes(), n);
    EXPECT_LT(h.max_off_diagonal(), 1e-10);
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0;
      for (double v : h.weight.row(k)) s += v * v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(CosineLogits, SelfAlignmentAndScaleInvariance) {
  Rng rng(3);
  OrthogonalHead h = orthogonal_init(3, 5, rng);
  Tensor v(Shape{1, 5});
  for (std::size_t c = 0; c < 5; ++c) v.at(0, c) = h.weight.at(1, c);
  const Tensor y = cosine_logits(h, v);
  EXPECT_NEAR(y.at(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(y.at(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(y.at(0, 2), 0.0, 1e-12);

  Tensor v10 = v;
  for (auto& e : v10.storage()) e *= 10;
  EXPECT_LT(max_abs_diff(cosine_logits(h, v10), y), 1e-12);
}

TEST(CosineLogits, ScaleInvarianceProperty) {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.index(8), n = 1 + rng.index(d), m = 1 + rng.index(4);
    OrthogonalHead h = orthogonal_init(n, d, rng);
    Tensor v = oracle::random_tensor({m, d}, rng);
    const double s = std::exp(rng.uniform(-5, 5));
    Tensor vs = v;
    for (auto& e : vs.storage()) e *= s;
    const Tensor a = cosine_logits(h, v), b = cosine_logits(h, vs);
    EXPECT_LT(max_abs_diff(a, b), 1e-12);
    for (double e : a.storage()) {
      EXPECT_LE(e, 1.0 + 1e-12);
      EXPECT_GE(e, -1.0 - 1e-12);
    }
  }
}

TEST(CosineLogits, ZeroEmbeddingNamesRow) {
  Rng rng(3);
  OrthogonalHead h = orthogonal_init(2, 3, rng);
  try {
    cosine_logits(h, Tensor::matrix({{1, 0, 0}, {0, 0, 0}}));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(Softmax, Examples) {
  const Tensor u = softmax_probs(Tensor::matrix({{2, 2, 2, 2}}));
  for (double p : u.storage()) EXPECT_NEAR(p, 0.25, 1e-15);
  const Tensor p = softmax_probs(Tensor::matrix({{0, std::log(3.0)}}));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  const Tensor shifted = softmax_probs(Tensor::matrix({{1000, 1000 + std::log(3.0)}}));
  EXPECT_LT(max_abs_diff(shifted, p), 1e-12);
}

TEST(AverageHead, MeanOverFeatures) {
  Tape t;
  EXPECT_EQ(average_head(t.constant(Tensor::matrix({{1, 3}, {2, 6}}))).value(), Tensor::vector({2, 4}));
}
