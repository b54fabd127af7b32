#include "amix/adaptivemix.hpp"

#include <cmath>

#include "amix/error.hpp"

namespace amix {

namespace {

constexpr double kMinProbability = 1e-12;

void check_lambda(std::span<const double> lambda) {
  for (std::size_t r = 0; r < lambda.size(); ++r) {
    if (!(lambda[r] >= 0.0 && lambda[r] <= 1.0)) {
      throw InvalidArgument("mixing coefficient " + std::to_string(lambda[r]) + " at pair " + std::to_string(r) +
                            " is outside [0, 1]");
    }
  }
}

}  // namespace

std::string to_string(Metric m) { return m == Metric::L1 ? "l1" : "l2sq"; }

Metric metric_from_string(const std::string& name) {
  if (name == "l1") return Metric::L1;
  if (name == "l2sq" || name == "l2") return Metric::SquaredL2;
  throw InvalidArgument("unknown metric '" + name + "' (expected l1 or l2sq)");
}

void MixConfig::validate() const {
  if (!(alpha > 0.0)) throw InvalidArgument("MixConfig: alpha must be positive");
  if (!(sigma >= 0.0)) throw InvalidArgument("MixConfig: sigma must be non-negative");
}

std::vector<double> sample_lambda(const MixConfig& cfg, std::size_t count, Rng& rng) {
  cfg.validate();
  if (count == 0) throw InvalidArgument("sample_lambda: count must be at least 1");
  std::vector<double> out(count);
  for (auto& l : out) l = rng.beta(cfg.alpha, cfg.alpha);
  return out;
}

Tensor mix_pair(const Tensor& x_i, const Tensor& x_j, double lambda) {
  if (x_i.shape() != x_j.shape()) throw ShapeError("mix_pair", x_i.shape(), x_j.shape());
  check_lambda(std::span<const double>(&lambda, 1));
  Tensor out(x_i.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lambda * x_i[k] + (1.0 - lambda) * x_j[k];
  return out;
}

MixedBatch make_mixed_batch(Tensor x_i, Tensor x_j, std::vector<double> lambda) {
  if (x_i.shape() != x_j.shape()) throw ShapeError("make_mixed_batch", x_i.shape(), x_j.shape());
  if (lambda.size() != x_i.rows()) throw ShapeError("make_mixed_batch", x_i.shape(), Shape{lambda.size()});
  check_lambda(lambda);
  Tensor x_hat(x_i.shape());
  const std::size_t d = x_i.cols();
  for (std::size_t r = 0; r < x_i.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) x_hat.at(r, c) = lambda[r] * x_i.at(r, c) + (1.0 - lambda[r]) * x_j.at(r, c);
  }
  return MixedBatch{std::move(x_i), std::move(x_j), std::move(lambda), std::move(x_hat)};
}

Var mix_rows(Var x_i, Var x_j, std::span<const double> lambda) {
  if (x_i.shape() != x_j.shape()) throw ShapeError("mix_rows", x_i.shape(), x_j.shape());
  check_lambda(lambda);
  std::vector<double> rest(lambda.size());
  for (std::size_t r = 0; r < lambda.size(); ++r) rest[r] = 1.0 - lambda[r];
  return add(scale_rows(x_i, lambda), scale_rows(x_j, rest));
}

Var adaptivemix_loss_from_features(Var f_i, Var f_j, Var f_hat, std::span<const double> lambda,
                                   const MixConfig& cfg, Rng& rng) {
  cfg.validate();
  for (Var f : {f_i, f_j, f_hat}) {
    if (!f.value().all_finite()) throw NumericError("adaptivemix_loss: non-finite features");
  }
  Var target = mix_rows(f_i, f_j, lambda);
  Var noisy = f_hat;
  if (cfg.sigma > 0.0) {
    Tensor noise(f_hat.shape());
    for (auto& e : noise.storage()) e = cfg.sigma * rng.normal();
    noisy = add(f_hat, f_hat.tape()->constant(std::move(noise)));
  }
  Var diff = sub(target, noisy);
  Var per_pair = reduce(cfg.metric == Metric::L1 ? Reduction::L1Norm : Reduction::L2NormSq, diff, 1);
  return mean(per_pair);
}

Var adaptivemix_loss(const Network& feature_net, std::span<const Var> feature_params, Var x_i, Var x_j,
                     std::span<const double> lambda, const MixConfig& cfg, Rng& rng) {
  Var x_hat = mix_rows(x_i, x_j, lambda);
  Var f_i = feature_net.forward(feature_params, x_i);
  Var f_j = feature_net.forward(feature_params, x_j);
  Var f_hat = feature_net.forward(feature_params, x_hat);
  return adaptivemix_loss_from_features(f_i, f_j, f_hat, lambda, cfg, rng);
}

Var adaptivemix_loss(const Network& feature_net, std::span<const Var> feature_params, const MixedBatch& batch,
                     const MixConfig& cfg, Rng& rng) {
  if (feature_params.empty()) throw InvalidArgument("adaptivemix_loss: feature network has no bound parameters");
  Tape& tape = *feature_params.front().tape();
  Var x_i = tape.constant(batch.x_i);
  Var x_j = tape.constant(batch.x_j);
  Var x_hat = tape.constant(batch.x_hat);
  Var f_i = feature_net.forward(feature_params, x_i);
  Var f_j = feature_net.forward(feature_params, x_j);
  Var f_hat = feature_net.forward(feature_params, x_hat);
  return adaptivemix_loss_from_features(f_i, f_j, f_hat, batch.lambda, cfg, rng);
}

Var mixed_cross_entropy(Var probs, std::span<const std::size_t> label_i, std::span<const std::size_t> label_j,
                        std::span<const double> lambda, std::size_t* clamped) {
  if (probs.shape().size() != 2) throw ShapeError("mixed_cross_entropy", probs.shape(), Shape{0, 0});
  const std::size_t m = probs.shape()[0];
  if (label_i.size() != m || label_j.size() != m || lambda.size() != m) {
    throw ShapeError("mixed_cross_entropy", probs.shape(), Shape{label_i.size(), label_j.size(), lambda.size()});
  }
  check_lambda(lambda);

  auto term = [&](std::span<const std::size_t> labels) {
    Var p = pick(probs, labels);
    if (clamped) {
      for (double v : p.value().storage()) *clamped += v < kMinProbability ? 1 : 0;
    }
    return neg(log(clamp(p, kMinProbability, 1.0)));
  };

  Tape& tape = *probs.tape();
  std::vector<double> rest(m);
  for (std::size_t r = 0; r < m; ++r) rest[r] = 1.0 - lambda[r];
  Var w_i = tape.constant(Tensor::vector(std::vector<double>(lambda.begin(), lambda.end())));
  Var w_j = tape.constant(Tensor::vector(std::move(rest)));
  return mean(add(mul(w_i, term(label_i)), mul(w_j, term(label_j))));
}

}  // namespace amix
