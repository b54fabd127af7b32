#include "amix/optim.hpp"

#include <cmath>

#include "amix/error.hpp"

namespace amix {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw InvalidArgument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void OptimizerSettings::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("optimizer: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidArgument("optimizer: eps must be positive");
}

void Optimizer::apply(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw InvalidArgument("Optimizer::apply: " + std::to_string(params.size()) + " parameters but " +
                          std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape()) throw ShapeError("Optimizer::apply", params[k]->shape(), grads[k].shape());
    if (!grads[k].all_finite()) {
      throw NumericError("Optimizer::apply: non-finite gradient for parameter " + std::to_string(k));
    }
  }

  ++step_;
  if (settings_.kind == OptimizerKind::Sgd) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k]->data();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= settings_.lr * grads[k][i];
    }
    return;
  }

  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  } else if (m_.size() != params.size()) {
    throw InvalidArgument("Optimizer::apply: parameter list changed between steps");
  }

  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= settings_.lr * m_hat / (std::sqrt(v_hat) + settings_.eps);
    }
  }
}

void Optimizer::restore(std::size_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != v.size()) throw InvalidArgument("Optimizer::restore: moment count mismatch");
  step_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

std::vector<Tensor*> parameter_pointers(Network& net) {
  std::vector<Tensor*> out;
  for (auto& p : net.parameters()) out.push_back(&p.value);
  return out;
}

double parameter_norm(const Network& net) {
  double s = 0.0;
  for (const auto& p : net.parameters()) {
    for (double v : p.value.storage()) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace amix
