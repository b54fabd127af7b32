#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "amix/adaptivemix.hpp"
#include "amix/data.hpp"
#include "amix/error.hpp"
#include "amix/eval.hpp"
#include "amix/nets.hpp"
#include "amix/optim.hpp"
#include "amix/rng.hpp"

namespace amix {

enum class GanObjective { StdGan, WganClip, WganClipAdaptiveMix };

std::string to_string(GanObjective o);
GanObjective objective_from_string(const std::string& name);

struct GanConfig {
  std::size_t latent_dim = 2;
  MlpSpec generator{{2, 64, 64, 2}, Activation::relu()};
  /// Feature extractor F of the critic; the head J averages its output.
  MlpSpec critic{{2, 64, 64, 16}, Activation::leaky_relu()};
  GanObjective objective = GanObjective::WganClipAdaptiveMix;
  double clip = 0.05;
  std::size_t critic_steps = 3;
  MixConfig mix{};
  double adaptivemix_weight = 1.0;
  /// When false the generator update ignores the AdaptiveMix term.
  bool adaptivemix_to_generator = true;
  OptimizerSettings optimizer{OptimizerKind::Adam, 1e-4, 0.5, 0.9, 1e-8};
  std::size_t batch_size = 256;
  std::size_t total_steps = 20000;
  std::size_t log_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Independent random streams of one GAN run.
struct GanStreams {
  Rng init;
  Rng data;
  Rng noise;  // latent draws
  Rng mix;    // mixing coefficients and feature noise
  Rng eval;   // logging-only draws; never affects training

  static GanStreams from_seed(std::uint64_t seed);
};

struct GanModels {
  Network generator;
  Network critic;
  Optimizer generator_opt;
  Optimizer critic_opt;
};

GanModels init_gan(const GanConfig& cfg, Rng& init_rng);

struct StepMetrics {
  double critic_loss = 0.0;
  double gen_loss = 0.0;
  /// AdaptiveMix loss on the last critic step's real/fake pairs. Monitored
  /// for every objective; trained on only by the AdaptiveMix objective.
  double l_ada = 0.0;
  double critic_norm = 0.0;
  double gen_norm = 0.0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

/// Supplies a fresh batch of real samples on every call.
using RealSource = std::function<Tensor()>;

Tensor sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng);

/// critic_steps clipped critic updates, then one generator update.
StepMetrics wgan_step(GanModels& models, const RealSource& real, const GanConfig& cfg, GanStreams& streams);
/// As wgan_step with the weighted AdaptiveMix term added to the critic and
/// generator objectives. Real row r is mixed with fake row r.
StepMetrics adaptivemix_gan_step(GanModels& models, const RealSource& real, const GanConfig& cfg,
                                 GanStreams& streams);
/// Non-saturating cross-entropy GAN; D = sigmoid(J(F(x))).
StepMetrics stdgan_step(GanModels& models, const RealSource& real, const GanConfig& cfg, GanStreams& streams);

StepMetrics gan_step(GanModels& models, const RealSource& real, const GanConfig& cfg, GanStreams& streams);

/// Critic loss on one real/fake batch and its gradient for every critic
/// parameter, in parameters() order. The AdaptiveMix loss on the pairs is
/// always evaluated (and draws its feature noise from `mix`); it enters the
/// total as ada_weight * L_ada only when ada_weight > 0.
struct CriticObjective {
  double adversarial = 0.0;
  double l_ada = 0.0;
  double total = 0.0;
  std::vector<Tensor> gradients;
};

CriticObjective critic_objective(const Network& critic, const Tensor& real_x, const Tensor& fake_x,
                                 std::span<const double> lambda, const GanConfig& cfg, Rng& mix,
                                 double adversarial_weight, double ada_weight);

/// Realness score J(F(x)) per row, or D(x) for the standard GAN.
Tensor critic_scores(const Network& critic, const Tensor& x, GanObjective objective);

struct GanLogRow {
  std::size_t step = 0;
  StepMetrics metrics;
  double lipschitz_ratio = 0.0;

  friend bool operator==(const GanLogRow&, const GanLogRow&) = default;
};

struct GanRun {
  GanModels models;
  GanStreams streams;
  std::size_t step = 0;
  std::vector<GanLogRow> log;
};

/// Error raised by a training loop, carrying the failing step.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

GanRun train_gan(const GanConfig& cfg, const Dataset& data);
/// Generator samples for evaluation.
Tensor generate(const Network& generator, std::size_t n, std::size_t latent_dim, Rng& rng);

const std::vector<std::string>& gan_log_columns();

// ------------------------------------------------------------ classifier

struct ClassifierConfig {
  MlpSpec feature{{2, 32, 32, 8}, Activation::relu()};
  std::size_t classes = 3;
  MixConfig mix{};
  double adaptivemix_weight = 1.0;
  double cross_entropy_weight = 1.0;
  /// Off: lambda is fixed to 1, so inputs are not mixed.
  bool mix_inputs = true;
  OptimizerSettings optimizer{};
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassifierStreams {
  Rng init;
  Rng data;
  Rng mix;

  static ClassifierStreams from_seed(std::uint64_t seed);
};

struct ClassifierLogRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double mixed_ce = 0.0;
  double l_ada = 0.0;
  double train_accuracy = 0.0;

  friend bool operator==(const ClassifierLogRow&, const ClassifierLogRow&) = default;
};

struct ClassifierRun {
  Classifier model;
  Optimizer opt;
  ClassifierStreams streams;
  std::size_t epoch = 0;
  std::size_t clamped_probabilities = 0;
  std::vector<ClassifierLogRow> log;
};

ClassifierRun init_classifier(const ClassifierConfig& cfg);
/// One epoch of mixed cross-entropy plus weighted AdaptiveMix on the
/// orthogonal-head classifier.
ClassifierLogRow classifier_epoch(ClassifierRun& run, const ClassifierConfig& cfg, const Dataset& data);
ClassifierRun train_classifier(const ClassifierConfig& cfg, const Dataset& data);

const std::vector<std::string>& classifier_log_columns();

}  // namespace amix
