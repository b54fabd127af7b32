#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amix/nets.hpp"
#include "amix/tensor.hpp"

namespace amix {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  friend bool operator==(const OptimizerSettings&, const OptimizerSettings&) = default;
};

/// SGD or bias-corrected Adam over a fixed list of parameter tensors.
/// Moments are allocated lazily on the first apply().
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerSettings settings) : settings_(settings) { settings_.validate(); }

  /// Updates params in place. Throws NumericError on a non-finite gradient
  /// before touching any parameter.
  void apply(std::span<Tensor* const> params, std::span<const Tensor> grads);

  const OptimizerSettings& settings() const { return settings_; }
  std::size_t steps() const { return step_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::size_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

  friend bool operator==(const Optimizer&, const Optimizer&) = default;

 private:
  OptimizerSettings settings_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

std::vector<Tensor*> parameter_pointers(Network& net);

/// Euclidean norm of all parameters taken together.
double parameter_norm(const Network& net);

}  // namespace amix
