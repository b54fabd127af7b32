#include "amix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>

#include "amix/autodiff.hpp"
#include "amix/error.hpp"

namespace amix {

namespace {

double distance(std::span<const double> a, std::span<const double> b, Distance metric) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += metric == Distance::L1 ? std::abs(d) : d * d;
  }
  return metric == Distance::L1 ? s : std::sqrt(s);
}

Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  const std::size_t n = t.size();
  return Tensor(Shape{n, 1}, std::move(t.storage()));
}

}  // namespace

double lipschitz_ratio(const std::function<Tensor(const Tensor&)>& feature_map, const Tensor& a, const Tensor& b,
                       Distance metric_v, Distance metric_x) {
  if (a.shape() != b.shape()) throw ShapeError("lipschitz_ratio", a.shape(), b.shape());
  const std::size_t n = a.rows();
  std::vector<double> dx(n);
  for (std::size_t r = 0; r < n; ++r) {
    dx[r] = distance(a.row(r), b.row(r), metric_x);
    if (!(dx[r] > 0.0)) throw InvalidArgument("lipschitz_ratio: pair " + std::to_string(r) + " has zero input distance");
  }
  const Tensor fa = as_matrix(feature_map(a));
  const Tensor fb = as_matrix(feature_map(b));
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += distance(fa.row(r), fb.row(r), metric_v) / dx[r];
  return total / static_cast<double>(n);
}

double lipschitz_ratio(const Network& feature_net, const Tensor& a, const Tensor& b, Distance metric_v,
                       Distance metric_x) {
  return lipschitz_ratio([&](const Tensor& x) { return feature_net.forward(x); }, a, b, metric_v, metric_x);
}

LipschitzReport lipschitz_report(const Network& feature_net, const Tensor& real, const Tensor& generated,
                                 std::size_t pairs, Rng& rng, std::uint64_t seed) {
  if (pairs == 0) throw InvalidArgument("lipschitz_report: pair count must be positive");
  if (real.rows() < 2 || generated.rows() < 2) throw InvalidArgument("lipschitz_report: need two samples per pool");
  auto distinct_pair = [&](std::size_t n) {
    const std::size_t i = rng.index(n);
    std::size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    return std::pair{i, j};
  };
  std::vector<std::size_t> ra, rb, ga, gb, ba, bb;
  for (std::size_t p = 0; p < pairs; ++p) {
    auto [i, j] = distinct_pair(real.rows());
    ra.push_back(i);
    rb.push_back(j);
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    auto [i, j] = distinct_pair(generated.rows());
    ga.push_back(i);
    gb.push_back(j);
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    ba.push_back(rng.index(real.rows()));
    bb.push_back(rng.index(generated.rows()));
  }
  LipschitzReport rep;
  rep.pairs = pairs;
  rep.seed = seed;
  rep.real = lipschitz_ratio(feature_net, real.gather_rows(ra), real.gather_rows(rb));
  rep.generated = lipschitz_ratio(feature_net, generated.gather_rows(ga), generated.gather_rows(gb));
  rep.both = lipschitz_ratio(feature_net, real.gather_rows(ba), generated.gather_rows(bb));
  return rep;
}

double ConfidenceMap::x_at(std::size_t c) const {
  if (grid.resolution == 1) return 0.5 * (grid.x_min + grid.x_max);
  return grid.x_min + (grid.x_max - grid.x_min) * static_cast<double>(c) / static_cast<double>(grid.resolution - 1);
}

double ConfidenceMap::y_at(std::size_t r) const {
  if (grid.resolution == 1) return 0.5 * (grid.y_min + grid.y_max);
  return grid.y_max - (grid.y_max - grid.y_min) * static_cast<double>(r) / static_cast<double>(grid.resolution - 1);
}

ConfidenceMap confidence_map(const std::function<Tensor(const Tensor&)>& discriminator, const GridSpec& grid) {
  if (grid.resolution == 0) throw InvalidArgument("confidence_map: resolution must be positive");
  if (!(grid.x_max > grid.x_min) || !(grid.y_max > grid.y_min)) {
    throw InvalidArgument("confidence_map: empty grid bounds");
  }
  ConfidenceMap map;
  map.grid = grid;
  const std::size_t res = grid.resolution;
  Tensor points(Shape{res * res, 2});
  for (std::size_t r = 0; r < res; ++r) {
    for (std::size_t c = 0; c < res; ++c) {
      points.at(r * res + c, 0) = map.x_at(c);
      points.at(r * res + c, 1) = map.y_at(r);
    }
  }
  const Tensor out = discriminator(points);
  if (out.size() != res * res) throw ShapeError("confidence_map: discriminator output", out.shape(), Shape{res * res});
  map.values = out.storage();
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!std::isfinite(map.values[i])) map.non_finite.push_back(i);
  }
  return map;
}

void write_map_csv(const std::filesystem::path& path, const ConfidenceMap& map) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out << std::setprecision(17);
  const std::size_t res = map.grid.resolution;
  for (std::size_t r = 0; r < res; ++r) {
    for (std::size_t c = 0; c < res; ++c) out << (c ? "," : "") << map.values[r * res + c];
    out << '\n';
  }
}

void write_map_pgm(const std::filesystem::path& path, const ConfidenceMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  const std::size_t res = map.grid.resolution;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : map.values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  out << "P5 " << res << ' ' << res << " 255\n";
  for (double v : map.values) {
    unsigned char level = 0;
    if (std::isfinite(v)) {
      level = hi > lo ? static_cast<unsigned char>(std::lround(255.0 * (v - lo) / (hi - lo))) : 128;
    }
    out.put(static_cast<char>(level));
  }
}

ModeMetrics mode_metrics(const Tensor& generated, const ModeSpec& modes) {
  modes.validate();
  const std::size_t m = generated.rows();
  if (m == 0) throw InvalidArgument("mode_metrics: no samples");
  if (generated.cols() != 2) throw ShapeError("mode_metrics", generated.shape(), Shape{m, 2});
  ModeMetrics out;
  out.per_mode.assign(modes.modes(), 0);
  const double radius = out.quality_radius_stds * modes.std;
  std::size_t good = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < modes.modes(); ++k) {
      const double dx = generated.at(i, 0) - modes.centers[k][0];
      const double dy = generated.at(i, 1) - modes.centers[k][1];
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best_d <= radius) {
      ++good;
      ++out.per_mode[best];
    }
  }
  const double needed = static_cast<double>(m) / (out.coverage_divisor * static_cast<double>(modes.modes()));
  for (auto count : out.per_mode) {
    if (count > 0 && static_cast<double>(count) >= needed) ++out.covered;
  }
  out.high_quality_fraction = static_cast<double>(good) / static_cast<double>(m);
  return out;
}

double mean_coordinate_std(const Tensor& e) {
  const std::size_t n = e.rows();
  const std::size_t d = e.cols();
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += e.at(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (e.at(r, c) - mu) * (e.at(r, c) - mu);
    total += std::sqrt(var / static_cast<double>(n));
  }
  return total / static_cast<double>(d);
}

Compactness compactness(const Tensor& embeddings, std::span<const std::size_t> labels, std::size_t classes) {
  if (labels.size() != embeddings.rows()) throw ShapeError("compactness", embeddings.shape(), Shape{labels.size()});
  Compactness out;
  out.per_class.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == k) idx.push_back(i);
    }
    if (idx.size() >= 2) out.per_class[k] = mean_coordinate_std(embeddings.gather_rows(idx));
  }
  out.total = mean_coordinate_std(embeddings);
  return out;
}

std::optional<std::vector<double>> dominant_eigenvector(const Tensor& gram, Rng& rng, std::size_t max_iter,
                                                        double tol) {
  const std::size_t d = gram.rows();
  if (gram.cols() != d) throw ShapeError("dominant_eigenvector", gram.shape(), Shape{d, d});
  std::vector<double> v(d, 0.0), w(d);
  v[0] = 1.0;
  auto multiply = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += gram.at(i, j) * in[j];
      out[i] = s;
    }
    double norm = 0.0;
    for (double x : out) norm += x * x;
    return std::sqrt(norm);
  };
  bool restarted = false;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double norm = multiply(v, w);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      // Start vector in the null space (or a zero matrix); retry once from a random direction.
      if (restarted) return std::nullopt;
      restarted = true;
      double s = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        s += x * x;
      }
      for (auto& x : v) x /= std::sqrt(s);
      continue;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      w[i] /= norm;
      change += (w[i] - v[i]) * (w[i] - v[i]);
    }
    v.swap(w);
    if (std::sqrt(change) < tol) return v;
  }
  return std::nullopt;
}

OodModel fit_class_directions(const Tensor& embeddings, std::span<const std::size_t> labels, std::size_t classes,
                              Rng& rng) {
  if (labels.size() != embeddings.rows()) {
    throw ShapeError("fit_class_directions", embeddings.shape(), Shape{labels.size()});
  }
  const std::size_t d = embeddings.cols();
  OodModel model;
  model.directions = Tensor(Shape{classes, d});
  for (std::size_t k = 0; k < classes; ++k) {
    Tensor gram(Shape{d, d});
    std::size_t count = 0;
    for (std::size_t r = 0; r < embeddings.rows(); ++r) {
      if (labels[r] != k) continue;
      ++count;
      auto row = embeddings.row(r);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) gram.at(i, j) += row[i] * row[j];
    }
    if (count == 0) throw InvalidArgument("fit_class_directions: class " + std::to_string(k) + " has no samples");
    auto v = dominant_eigenvector(gram, rng);
    if (!v) throw NumericError("fit_class_directions: power iteration did not converge for class " + std::to_string(k));
    for (double x : *v) {
      if (x == 0.0) continue;
      if (x < 0.0) {
        for (auto& y : *v) y = -y;
      }
      break;
    }
    std::copy(v->begin(), v->end(), model.directions.row(k).begin());
  }
  return model;
}

std::vector<double> ood_scores(const OodModel& model, const Tensor& embeddings) {
  if (embeddings.cols() != model.directions.cols()) {
    throw ShapeError("ood_scores", embeddings.shape(), model.directions.shape());
  }
  std::vector<double> out(embeddings.rows());
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    auto e = embeddings.row(r);
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw NumericError("ood_scores: embedding row " + std::to_string(r) + " has zero norm");
    double best = std::numbers::pi / 2.0;
    for (std::size_t k = 0; k < model.directions.rows(); ++k) {
      auto v = model.directions.row(k);
      double dot = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * v[i];
      best = std::min(best, std::acos(std::clamp(std::abs(dot) / norm, 0.0, 1.0)));
    }
    out[r] = best;
  }
  return out;
}

Confusion ood_confusion(std::span<const double> id_scores, std::span<const double> ood_scores, double threshold) {
  Confusion c;
  for (double s : ood_scores) (s > threshold ? c.tp : c.fn)++;
  for (double s : id_scores) (s > threshold ? c.fp : c.tn)++;
  return c;
}

double f1_score(const Confusion& c) {
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) + static_cast<double>(c.fn);
  return denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
}

OodF1 ood_f1(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) throw InvalidArgument("ood_f1: both score sets must be nonempty");
  std::vector<double> candidates(id_scores.begin(), id_scores.end());
  candidates.insert(candidates.end(), ood_scores.begin(), ood_scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.insert(candidates.begin(), std::nextafter(candidates.front(), -std::numeric_limits<double>::infinity()));

  OodF1 best;
  best.f1 = -1.0;
  for (double t : candidates) {
    const Confusion c = ood_confusion(id_scores, ood_scores, t);
    const double f = f1_score(c);
    if (f > best.f1) {
      best = OodF1{f, t, c.tp, c.fp, c.fn, c.tn};
    }
  }
  return best;
}

Tensor Classifier::probabilities(const Tensor& x) const {
  return softmax_probs(cosine_logits(head, feature.forward(x)));
}

std::vector<std::size_t> Classifier::predict(const Tensor& x) const {
  const Tensor logits = cosine_logits(head, feature.forward(x));
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw InvalidArgument("attack: epsilon must be non-negative");
  if (kind == AttackKind::Pgd && iterations < 1) throw InvalidArgument("attack: pgd needs at least one iteration");
  if (!(clamp_max >= clamp_min)) throw InvalidArgument("attack: empty clamp range");
}

namespace {

constexpr double kMinProbability = 1e-12;

Var cross_entropy_terms(const Classifier& model, Tape& tape, Var x, std::span<const std::size_t> labels) {
  std::vector<Var> params;
  for (const auto& p : model.feature.parameters()) params.push_back(tape.constant(p.value));
  Var features = model.feature.forward(params, x);
  Var probs = softmax_probs(cosine_logits(tape.constant(model.head.weight), features));
  return neg(log(clamp(pick(probs, labels), kMinProbability, 1.0)));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels) {
  Tape tape;
  Var input = tape.leaf(x);
  Var loss = sum(cross_entropy_terms(model, tape, input, labels));
  Tensor g = tape.backward(loss)[input];
  if (!g.all_finite()) throw NumericError("attack: non-finite input gradient");
  return g;
}

std::vector<double> cross_entropy_per_sample(const Classifier& model, const Tensor& x,
                                             std::span<const std::size_t> labels) {
  Tape tape;
  return cross_entropy_terms(model, tape, tape.constant(x), labels).value().storage();
}

Tensor fgsm_attack(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels,
                   const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.epsilon == 0.0) return x;
  const Tensor g = input_gradient(model, x, labels);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(x[i] + cfg.epsilon * sign(g[i]), cfg.clamp_min, cfg.clamp_max);
  }
  return out;
}

Tensor pgd_attack(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels,
                  const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.iterations < 1) throw InvalidArgument("attack: pgd needs at least one iteration");
  auto project = [&](Tensor& adv) {
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double lo = std::max(cfg.clamp_min, x[i] - cfg.epsilon);
      const double hi = std::min(cfg.clamp_max, x[i] + cfg.epsilon);
      adv[i] = std::clamp(adv[i], lo, hi);
    }
  };
  Tensor adv = x;
  if (cfg.random_start) {
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += rng.uniform(-cfg.epsilon, cfg.epsilon);
    project(adv);
  }
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Tensor g = input_gradient(model, adv, labels);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += cfg.step_size * sign(g[i]);
    project(adv);
  }
  return adv;
}

double accuracy(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels) {
  const auto pred = model.predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double robust_accuracy(const Classifier& model, const Dataset& ds, const AttackConfig& cfg, Rng& rng) {
  if (!ds.labels) throw InvalidArgument("robust_accuracy: dataset is unlabeled");
  const Tensor adv = cfg.kind == AttackKind::Fgsm ? fgsm_attack(model, ds.samples, *ds.labels, cfg)
                                                  : pgd_attack(model, ds.samples, *ds.labels, cfg, rng);
  return accuracy(model, adv, *ds.labels);
}

}  // namespace amix
