#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amix/autodiff.hpp"
#include "amix/rng.hpp"
#include "amix/tensor.hpp"

namespace amix {

struct Activation {
  enum class Kind { Identity, Relu, LeakyRelu, Tanh, Sigmoid };
  Kind kind = Kind::Identity;
  double slope = 0.2;  // LeakyRelu only

  static Activation identity() { return {}; }
  static Activation relu() { return {Kind::Relu, 0.0}; }
  static Activation leaky_relu(double slope = 0.2) { return {Kind::LeakyRelu, slope}; }
  static Activation tanh() { return {Kind::Tanh, 0.0}; }
  static Activation sigmoid() { return {Kind::Sigmoid, 0.0}; }

  friend bool operator==(const Activation&, const Activation&) = default;
};

std::string to_string(const Activation& act);
Activation activation_from_string(const std::string& name);
Var apply(const Activation& act, Var x);

/// Layer widths of a fully connected network, input first.
struct MlpSpec {
  std::vector<std::size_t> widths;
  /// One entry per hidden layer (widths.size() - 2 entries).
  std::vector<Activation> hidden;
  Activation output = Activation::identity();

  MlpSpec() = default;
  MlpSpec(std::vector<std::size_t> widths, Activation hidden_act, Activation output_act = Activation::identity());

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct Parameter {
  std::string name;
  Tensor value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Fully connected network. Layer l holds W<l> (out x in) and b<l> (out).
class Network {
 public:
  Network() = default;
  /// Zero-initialized parameters of the right shapes.
  explicit Network(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Tensor& weight(std::size_t layer) { return params_[2 * layer].value; }
  Tensor& bias(std::size_t layer) { return params_[2 * layer + 1].value; }
  std::size_t parameter_count() const;

  /// Places every parameter on the tape as a leaf, in parameters() order.
  std::vector<Var> bind(Tape& tape) const;
  Var forward(std::span<const Var> bound, Var x) const;
  /// Evaluation without keeping a record.
  Tensor forward(const Tensor& x) const;

  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  MlpSpec spec_;
  std::vector<Parameter> params_;
};

/// Weights uniform with standard deviation 1/sqrt(fan_in); biases zero.
Network init_network(const MlpSpec& spec, Rng& rng);

/// Bias-free class weight vectors scored by cosine similarity.
struct OrthogonalHead {
  Tensor weight;  // n_classes x embedding dim

  std::size_t classes() const { return weight.rows(); }
  std::size_t dim() const { return weight.cols(); }
  /// Largest |w_k . w_l| over k != l.
  double max_off_diagonal() const;
};

/// Gram-Schmidt on Gaussian rows, unit-normalized. Requires n_classes <= dim.
OrthogonalHead orthogonal_init(std::size_t n_classes, std::size_t dim, Rng& rng);

/// y[i,k] = w_k . v_i / (|w_k| |v_i|). Throws naming the first zero-norm row.
Var cosine_logits(Var head_weight, Var embeddings);
Tensor cosine_logits(const OrthogonalHead& head, const Tensor& embeddings);

Var softmax_probs(Var logits);
Tensor softmax_probs(const Tensor& logits);

/// Critic head J: mean over the feature dimension, one scalar per row.
Var average_head(Var features);

}  // namespace amix
