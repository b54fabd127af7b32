#include "amix/nets.hpp"

#include <cmath>

#include "amix/error.hpp"

namespace amix {

std::string to_string(const Activation& act) {
  switch (act.kind) {
    case Activation::Kind::Identity: return "identity";
    case Activation::Kind::Relu: return "relu";
    case Activation::Kind::LeakyRelu: return "leaky_relu";
    case Activation::Kind::Tanh: return "tanh";
    case Activation::Kind::Sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity" || name == "none") return Activation::identity();
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu") return Activation::leaky_relu();
  if (name == "tanh") return Activation::tanh();
  if (name == "sigmoid") return Activation::sigmoid();
  throw InvalidArgument("unknown activation '" + name + "'");
}

Var apply(const Activation& act, Var x) {
  switch (act.kind) {
    case Activation::Kind::Identity: return x;
    case Activation::Kind::Relu: return relu(x);
    case Activation::Kind::LeakyRelu: return leaky_relu(x, act.slope);
    case Activation::Kind::Tanh: return tanh(x);
    case Activation::Kind::Sigmoid: return sigmoid(x);
  }
  return x;
}

MlpSpec::MlpSpec(std::vector<std::size_t> w, Activation hidden_act, Activation output_act)
    : widths(std::move(w)), output(output_act) {
  if (widths.size() >= 2) hidden.assign(widths.size() - 2, hidden_act);
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw InvalidArgument("MlpSpec: at least two widths required");
  for (auto w : widths) {
    if (w == 0) throw InvalidArgument("MlpSpec: widths must be positive");
  }
  if (hidden.size() != widths.size() - 2) {
    throw InvalidArgument("MlpSpec: expected " + std::to_string(widths.size() - 2) + " hidden activations, got " +
                          std::to_string(hidden.size()));
  }
}

Network::Network(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    params_.push_back({"W" + std::to_string(l), Tensor(Shape{spec_.widths[l + 1], spec_.widths[l]})});
    params_.push_back({"b" + std::to_string(l), Tensor(Shape{spec_.widths[l + 1]})});
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Var> Network::bind(Tape& tape) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(tape.leaf(p.value));
  return out;
}

Var Network::forward(std::span<const Var> bound, Var x) const {
  if (bound.size() != params_.size()) throw InvalidArgument("Network::forward: wrong number of bound parameters");
  if (x.shape().size() != 2 || x.shape()[1] != spec_.input_dim()) {
    throw ShapeError("Network::forward", x.shape(), Shape{0, spec_.input_dim()});
  }
  Var h = x;
  const std::size_t layers = spec_.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = affine(h, bound[2 * l], bound[2 * l + 1]);
    h = apply(l + 1 < layers ? spec_.hidden[l] : spec_.output, h);
  }
  return h;
}

Tensor Network::forward(const Tensor& x) const {
  Tape tape;
  std::vector<Var> bound;
  bound.reserve(params_.size());
  for (const auto& p : params_) bound.push_back(tape.constant(p.value));
  return forward(bound, tape.constant(x)).value();
}

std::vector<double> Network::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : params_) flat.insert(flat.end(), p.value.storage().begin(), p.value.storage().end());
  return flat;
}

void Network::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("Network::unflatten", Shape{parameter_count()}, Shape{flat.size()});
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    auto dst = p.value.data();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

Network init_network(const MlpSpec& spec, Rng& rng) {
  Network net(spec);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double bound = std::sqrt(3.0 / static_cast<double>(spec.widths[l]));
    for (auto& w : net.weight(l).storage()) w = rng.uniform(-bound, bound);
  }
  return net;
}

double OrthogonalHead::max_off_diagonal() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < classes(); ++k) {
    for (std::size_t l = k + 1; l < classes(); ++l) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dim(); ++c) dot += weight.at(k, c) * weight.at(l, c);
      worst = std::max(worst, std::abs(dot));
    }
  }
  return worst;
}

OrthogonalHead orthogonal_init(std::size_t n_classes, std::size_t dim, Rng& rng) {
  if (n_classes == 0 || dim == 0) throw InvalidArgument("orthogonal_init: empty head");
  if (n_classes > dim) {
    throw InvalidArgument("orthogonal_init: " + std::to_string(n_classes) + " orthogonal rows cannot fit in dimension " +
                          std::to_string(dim));
  }
  constexpr int kMaxRedraws = 100;
  constexpr double kDegenerate = 1e-6;
  Tensor w(Shape{n_classes, dim});
  std::vector<double> row(dim);
  for (std::size_t k = 0; k < n_classes; ++k) {
    bool accepted = false;
    for (int attempt = 0; attempt <= kMaxRedraws && !accepted; ++attempt) {
      for (auto& v : row) v = rng.normal();
      // Two projection passes keep the residual orthogonal to 1e-15 levels.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t l = 0; l < k; ++l) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dim; ++c) dot += row[c] * w.at(l, c);
          for (std::size_t c = 0; c < dim; ++c) row[c] -= dot * w.at(l, c);
        }
      }
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < kDegenerate) continue;
      for (std::size_t c = 0; c < dim; ++c) w.at(k, c) = row[c] / norm;
      accepted = true;
    }
    if (!accepted) throw NumericError("orthogonal_init: degenerate row after 100 redraws");
  }
  return OrthogonalHead{std::move(w)};
}

Var cosine_logits(Var head_weight, Var embeddings) {
  if (embeddings.shape().size() != 2 || head_weight.shape().size() != 2 ||
      embeddings.shape()[1] != head_weight.shape()[1]) {
    throw ShapeError("cosine_logits", embeddings.shape(), head_weight.shape());
  }
  const Tensor& v = embeddings.value();
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (double x : v.row(r)) s += x * x;
    if (!(s > 0.0)) throw NumericError("cosine_logits: embedding row " + std::to_string(r) + " has zero norm");
  }
  return matmul(normalize_rows(embeddings), transpose(normalize_rows(head_weight)));
}

Tensor cosine_logits(const OrthogonalHead& head, const Tensor& embeddings) {
  Tape tape;
  return cosine_logits(tape.constant(head.weight), tape.constant(embeddings)).value();
}

Var softmax_probs(Var logits) { return softmax_rows(logits); }

Tensor softmax_probs(const Tensor& logits) {
  Tape tape;
  return softmax_rows(tape.constant(logits)).value();
}

Var average_head(Var features) { return mean(features, 1); }

}  // namespace amix
