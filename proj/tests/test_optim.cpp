#include <gtest/gtest.h>

#include <cmath>

#include "amix/error.hpp"
#include "amix/optim.hpp"
#include "oracles.hpp"

using namespace amix;

TEST(Optimizer, SgdStep) {
  Optimizer opt(OptimizerSettings{OptimizerKind::Sgd, 0.1});
  Tensor p = Tensor::scalar(1.0);
  std::vector<Tensor*> ps{&p};
  std::vector<Tensor> gs{Tensor::scalar(1.0)};
  opt.apply(ps, gs);
  EXPECT_NEAR(p.item(), 0.9, 1e-15);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  Optimizer opt(OptimizerSettings{});
  Tensor p = Tensor::scalar(1.0);
  std::vector<Tensor*> ps{&p};
  std::vector<Tensor> gs{Tensor::scalar(1.0)};
  opt.apply(ps, gs);
  EXPECT_NEAR(1.0 - p.item(), 1e-3, 1e-10);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizer, AdamMatchesReferenceTrajectory) {
  Rng rng(6);
  const OptimizerSettings s{OptimizerKind::Adam, 3e-3, 0.5, 0.9, 1e-8};
  Optimizer opt(s);
  Tensor p = oracle::random_tensor({4}, rng);
  std::vector<oracle::ReferenceAdam> ref(4, oracle::ReferenceAdam{s.lr, s.beta1, s.beta2, s.eps});
  std::vector<double> q(p.storage());
  std::vector<Tensor*> ps{&p};
  for (int step = 0; step < 200; ++step) {
    Tensor g = oracle::random_tensor({4}, rng, -2, 2);
    std::vector<Tensor> gs{g};
    opt.apply(ps, gs);
    for (std::size_t i = 0; i < 4; ++i) q[i] = ref[i].step(q[i], g[i]);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
}

TEST(Optimizer, RejectsNonFiniteGradientWithoutUpdating) {
  Optimizer opt(OptimizerSettings{});
  Tensor a = Tensor::vector({1, 2}), b = Tensor::vector({3});
  std::vector<Tensor*> ps{&a, &b};
  std::vector<Tensor> gs{Tensor::vector({1, 1}), Tensor::vector({std::nan("")})};
  EXPECT_THROW(opt.apply(ps, gs), NumericError);
  EXPECT_EQ(a, Tensor::vector({1, 2}));
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Optimizer, ShapeAndCountChecks) {
  Optimizer opt(OptimizerSettings{});
  Tensor a = Tensor::vector({1, 2});
  std::vector<Tensor*> ps{&a};
  std::vector<Tensor> wrong{Tensor::vector({1})};
  EXPECT_THROW(opt.apply(ps, wrong), ShapeError);
  std::vector<Tensor> none;
  EXPECT_THROW(opt.apply(ps, none), InvalidArgument);
}

TEST(Optimizer, SettingsValidation) {
  EXPECT_THROW(Optimizer(OptimizerSettings{OptimizerKind::Adam, 0.0}), InvalidArgument);
  EXPECT_THROW(Optimizer(OptimizerSettings{OptimizerKind::Adam, 1e-3, 1.0}), InvalidArgument);
  EXPECT_THROW(optimizer_from_string("rmsprop"), InvalidArgument);
  EXPECT_EQ(optimizer_from_string(to_string(OptimizerKind::Sgd)), OptimizerKind::Sgd);
}

TEST(Optimizer, RestoreResumesIdentically) {
  Rng rng(8);
  Tensor p = oracle::random_tensor({3}, rng);
  Optimizer a(OptimizerSettings{});
  std::vector<Tensor*> ps{&p};
  std::vector<Tensor> gs{oracle::random_tensor({3}, rng)};
  a.apply(ps, gs);
  Tensor p2 = p;
  Optimizer b(OptimizerSettings{});
  b.restore(a.steps(), a.first_moments(), a.second_moments());
  EXPECT_EQ(a, b);
  std::vector<Tensor*> ps2{&p2};
  a.apply(ps, gs);
  b.apply(ps2, gs);
  EXPECT_EQ(p, p2);
}

TEST(ParameterNorm, EuclideanOverAllParameters) {
  Network net(MlpSpec({2, 2}, Activation::relu()));
  net.weight(0) = Tensor::matrix({{3, 0}, {0, 0}});
  net.bias(0) = Tensor::vector({0, 4});
  EXPECT_DOUBLE_EQ(parameter_norm(net), 5.0);
}
