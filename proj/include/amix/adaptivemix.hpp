#pragma once

// Hard samples by convex combination and the feature-shrinkage losses built
// on them.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amix/autodiff.hpp"
#include "amix/nets.hpp"
#include "amix/rng.hpp"

namespace amix {

enum class Metric { L1, SquaredL2 };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& name);

struct MixConfig {
  double alpha = 1.0;   // lambda ~ Beta(alpha, alpha)
  double sigma = 0.05;  // scale of the Gaussian noise on the mixed-sample features
  Metric metric = Metric::SquaredL2;

  void validate() const;
  friend bool operator==(const MixConfig&, const MixConfig&) = default;
};

/// Pairs (x_i[r], x_j[r]) with their mixing coefficients and the mixed rows.
struct MixedBatch {
  Tensor x_i;
  Tensor x_j;
  std::vector<double> lambda;
  Tensor x_hat;
};

std::vector<double> sample_lambda(const MixConfig& cfg, std::size_t count, Rng& rng);

/// lambda * x_i + (1 - lambda) * x_j.
Tensor mix_pair(const Tensor& x_i, const Tensor& x_j, double lambda);

/// Row-wise mix with one coefficient per row.
MixedBatch make_mixed_batch(Tensor x_i, Tensor x_j, std::vector<double> lambda);

/// Differentiable row-wise mix, used when either side carries gradient
/// (e.g. generated samples).
Var mix_rows(Var x_i, Var x_j, std::span<const double> lambda);

/// Mean over pairs of D(lambda F(x_i) + (1 - lambda) F(x_j), F(x_hat) + sigma * eps),
/// from already computed features. `eps` is drawn from `rng`, one standard
/// normal per feature coordinate, only when sigma > 0.
Var adaptivemix_loss_from_features(Var f_i, Var f_j, Var f_hat, std::span<const double> lambda,
                                   const MixConfig& cfg, Rng& rng);

/// Same loss with F applied to x_i, x_j and their mix. Inputs may be leaves
/// or constants; `feature_params` are F's parameters bound on the same tape.
Var adaptivemix_loss(const Network& feature_net, std::span<const Var> feature_params, Var x_i, Var x_j,
                     std::span<const double> lambda, const MixConfig& cfg, Rng& rng);

Var adaptivemix_loss(const Network& feature_net, std::span<const Var> feature_params, const MixedBatch& batch,
                     const MixConfig& cfg, Rng& rng);

/// Mean over rows of lambda * CE(p, label_i) + (1 - lambda) * CE(p, label_j).
/// Probabilities below 1e-12 at a needed label are clamped; each clamp adds
/// one to `*clamped` when it is given.
Var mixed_cross_entropy(Var probs, std::span<const std::size_t> label_i, std::span<const std::size_t> label_j,
                        std::span<const double> lambda, std::size_t* clamped = nullptr);

}  // namespace amix
