#pragma once

// Diagnostics: Lipschitz ratio, confidence maps, mode coverage, embedding
// compactness, angle-based OOD scoring and gradient-sign attacks.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amix/data.hpp"
#include "amix/nets.hpp"
#include "amix/rng.hpp"
#include "amix/tensor.hpp"

namespace amix {

// ---------------------------------------------------------------- Lipschitz

/// Distance used on either side of the ratio. Euclidean is the unsquared norm.
enum class Distance { Euclidean, L1 };

/// Mean over rows r of D_v(F(a[r]), F(b[r])) / D_x(a[r], b[r]).
/// Throws naming the first pair with zero input distance.
double lipschitz_ratio(const std::function<Tensor(const Tensor&)>& feature_map, const Tensor& a, const Tensor& b,
                       Distance metric_v = Distance::Euclidean, Distance metric_x = Distance::Euclidean);
double lipschitz_ratio(const Network& feature_net, const Tensor& a, const Tensor& b,
                       Distance metric_v = Distance::Euclidean, Distance metric_x = Distance::Euclidean);

struct LipschitzReport {
  double real = 0.0;       // pairs of real samples
  double generated = 0.0;  // pairs of generated samples
  double both = 0.0;       // real sample paired with a generated sample
  std::size_t pairs = 0;
  std::uint64_t seed = 0;
};

/// Draws `pairs` pairs for each pool from `real` and `generated` with `rng`.
LipschitzReport lipschitz_report(const Network& feature_net, const Tensor& real, const Tensor& generated,
                                 std::size_t pairs, Rng& rng, std::uint64_t seed);

// ------------------------------------------------------------ Confidence map

struct GridSpec {
  double x_min = -3.0, x_max = 3.0;
  double y_min = -3.0, y_max = 3.0;
  std::size_t resolution = 64;
};

/// values[r * resolution + c] is D at (x_c, y_r); rows run from y_max down to
/// y_min so the PGM rendering is upright.
struct ConfidenceMap {
  GridSpec grid;
  std::vector<double> values;
  std::vector<std::size_t> non_finite;  // flat indices of NaN/Inf cells

  double x_at(std::size_t c) const;
  double y_at(std::size_t r) const;
};

ConfidenceMap confidence_map(const std::function<Tensor(const Tensor&)>& discriminator, const GridSpec& grid);
void write_map_csv(const std::filesystem::path& path, const ConfidenceMap& map);
/// Binary P5 with min-max normalization to 0..255; constant maps render as
/// a single mid-gray level. Non-finite cells render black.
void write_map_pgm(const std::filesystem::path& path, const ConfidenceMap& map);

// ------------------------------------------------------------ Mode metrics

struct ModeMetrics {
  std::size_t covered = 0;
  double high_quality_fraction = 0.0;
  std::vector<std::size_t> per_mode;  // high-quality points per mode
  double quality_radius_stds = 3.0;
  double coverage_divisor = 5.0;
};

/// A point is high quality when within 3 std of its nearest center; a mode is
/// covered when it holds at least m / (5 * modes) high-quality points.
ModeMetrics mode_metrics(const Tensor& generated, const ModeSpec& modes);

// ------------------------------------------------------------ Compactness

struct Compactness {
  /// Per class; empty when the class has fewer than two samples.
  std::vector<std::optional<double>> per_class;
  double total = 0.0;
};

/// Mean over feature coordinates of the coordinate-wise population std.
double mean_coordinate_std(const Tensor& embeddings);
Compactness compactness(const Tensor& embeddings, std::span<const std::size_t> labels, std::size_t classes);

// ------------------------------------------------------------ OOD

struct OodModel {
  Tensor directions;  // classes x dim, unit rows
  double threshold = 0.0;
};

/// Dominant eigenvector of a symmetric PSD matrix by power iteration, started
/// from e1 (re-started from a random vector from `rng` if it stalls).
/// Returns nullopt when no convergence within `max_iter`.
std::optional<std::vector<double>> dominant_eigenvector(const Tensor& gram, Rng& rng, std::size_t max_iter = 10000,
                                                        double tol = 1e-10);

/// v*_k for every class from the class-k embedding rows; sign fixed so the
/// first nonzero coordinate is positive.
OodModel fit_class_directions(const Tensor& embeddings, std::span<const std::size_t> labels, std::size_t classes,
                              Rng& rng);

/// min_k arccos(|e . v_k| / |e|) for every row of `embeddings`.
std::vector<double> ood_scores(const OodModel& model, const Tensor& embeddings);

struct OodF1 {
  double f1 = 0.0;
  double threshold = 0.0;
  std::size_t true_positive = 0, false_positive = 0, false_negative = 0, true_negative = 0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Scores strictly above the threshold are flagged OOD (positive class).
Confusion ood_confusion(std::span<const double> id_scores, std::span<const double> ood_scores, double threshold);
double f1_score(const Confusion& c);

/// Sweeps the threshold over every observed score plus a value just below
/// the minimum (flag everything); returns the best F1.
OodF1 ood_f1(std::span<const double> id_scores, std::span<const double> ood_scores);

// ------------------------------------------------------------ Attacks

struct Classifier {
  Network feature;
  OrthogonalHead head;

  /// Softmax probabilities of the orthogonal head on F(x).
  Tensor probabilities(const Tensor& x) const;
  std::vector<std::size_t> predict(const Tensor& x) const;
};

enum class AttackKind { Fgsm, Pgd };

struct AttackConfig {
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 8.0 / 255.0;
  double step_size = 1.0 / 255.0;
  std::size_t iterations = 8;
  double clamp_min = 0.0;
  double clamp_max = 1.0;
  bool random_start = true;

  void validate() const;
};

/// Gradient of the mean cross-entropy of `model` at x with respect to x.
Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels);
Tensor fgsm_attack(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels,
                   const AttackConfig& cfg);
Tensor pgd_attack(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels,
                  const AttackConfig& cfg, Rng& rng);
/// Mean per-sample cross-entropy of the model.
std::vector<double> cross_entropy_per_sample(const Classifier& model, const Tensor& x,
                                             std::span<const std::size_t> labels);

double accuracy(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels);
/// Accuracy on attacked inputs; epsilon 0 gives clean accuracy.
double robust_accuracy(const Classifier& model, const Dataset& ds, const AttackConfig& cfg, Rng& rng);

}  // namespace amix
