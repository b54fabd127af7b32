#include "amix/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace amix {

using detail::json;
using detail::Section;

namespace {

const std::vector<std::string> kSources = {"nine-gaussians", "three-circles", "modes", "csv", "idx"};

std::string attack_to_string(AttackKind k) { return k == AttackKind::Fgsm ? "fgsm" : "pgd"; }

AttackKind attack_from_string(const std::string& s, const std::string& at) {
  if (s == "fgsm") return AttackKind::Fgsm;
  if (s == "pgd") return AttackKind::Pgd;
  throw ConfigError(at, "unknown attack '" + s + "' (expected fgsm or pgd)");
}

// Runs a library validate() and re-raises its message under a field path.
template <class F>
void validated(const std::string& at, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(at, e.what());
  }
}

template <class T, class F>
T parsed_enum(const std::string& at, const std::string& name, F&& from_string) {
  try {
    return from_string(name);
  } catch (const InvalidArgument& e) {
    throw ConfigError(at, e.what());
  }
}

// ------------------------------------------------------------------ readers

OptimizerSettings read_optimizer(const json& j, const std::string& path, OptimizerSettings o) {
  Section s(j, path);
  std::string kind = to_string(o.kind);
  s.get("kind", kind);
  o.kind = parsed_enum<OptimizerKind>(s.at("kind"), kind, optimizer_from_string);
  s.get("lr", o.lr);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("eps", o.eps);
  s.finish();
  validated(path, [&] { o.validate(); });
  return o;
}

MixConfig read_mix(const json& j, const std::string& path, MixConfig m) {
  Section s(j, path);
  s.get("alpha", m.alpha);
  s.get("sigma", m.sigma);
  std::string metric = to_string(m.metric);
  s.get("metric", metric);
  m.metric = parsed_enum<Metric>(s.at("metric"), metric, metric_from_string);
  s.finish();
  validated(path, [&] { m.validate(); });
  return m;
}

DataConfig read_data(const json& j, const std::string& path) {
  Section s(j, path);
  DataConfig d;
  s.get("source", d.source);
  s.get("n", d.n);
  if (const json* c = s.object("centers")) {
    if (!c->is_array()) throw ConfigError(s.at("centers"), "expected an array of [x, y] pairs");
    for (std::size_t i = 0; i < c->size(); ++i) {
      const json& p = (*c)[i];
      const std::string at = s.at("centers") + "[" + std::to_string(i) + "]";
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ConfigError(at, "expected [x, y]");
      }
      d.centers.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  s.get("std", d.std);
  s.get("path", d.path);
  s.get("labels_path", d.labels_path);
  s.get("header", d.header);
  if (s.has("label_column")) {
    std::string col;
    s.get("label_column", col);
    d.label_column = col;
  }
  s.finish();
  d.validate(path);
  return d;
}

GanConfig read_gan(const json& j, const std::string& path) {
  Section s(j, path);
  GanConfig g;
  s.get("latent_dim", g.latent_dim);
  if (const json* v = s.object("generator")) g.generator = detail::spec_from_json(*v, s.at("generator"), g.generator);
  if (const json* v = s.object("critic")) g.critic = detail::spec_from_json(*v, s.at("critic"), g.critic);
  std::string objective = to_string(g.objective);
  s.get("objective", objective);
  g.objective = parsed_enum<GanObjective>(s.at("objective"), objective, objective_from_string);
  s.get("clip", g.clip);
  s.get("critic_steps", g.critic_steps);
  if (const json* v = s.object("mix")) g.mix = read_mix(*v, s.at("mix"), g.mix);
  s.get("adaptivemix_weight", g.adaptivemix_weight);
  s.get("adaptivemix_to_generator", g.adaptivemix_to_generator);
  if (const json* v = s.object("optimizer")) g.optimizer = read_optimizer(*v, s.at("optimizer"), g.optimizer);
  s.get("batch_size", g.batch_size);
  s.get("total_steps", g.total_steps);
  s.get("log_every", g.log_every);
  if (s.has("seed")) throw ConfigError(s.at("seed"), "set the seed at the top level");
  s.finish();
  validated(path, [&] { g.validate(); });
  return g;
}

ClassifierConfig read_classifier(const json& j, const std::string& path) {
  Section s(j, path);
  ClassifierConfig c;
  if (const json* v = s.object("feature")) c.feature = detail::spec_from_json(*v, s.at("feature"), c.feature);
  s.get("classes", c.classes);
  if (const json* v = s.object("mix")) c.mix = read_mix(*v, s.at("mix"), c.mix);
  s.get("adaptivemix_weight", c.adaptivemix_weight);
  s.get("cross_entropy_weight", c.cross_entropy_weight);
  s.get("mix_inputs", c.mix_inputs);
  if (const json* v = s.object("optimizer")) c.optimizer = read_optimizer(*v, s.at("optimizer"), c.optimizer);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  if (s.has("seed")) throw ConfigError(s.at("seed"), "set the seed at the top level");
  s.finish();
  validated(path, [&] { c.validate(); });
  return c;
}

EvalConfig read_eval(const json& j, const std::string& path) {
  Section s(j, path);
  EvalConfig e;
  s.get("instrument", e.instrument);
  s.get("checkpoint", e.checkpoint);
  s.get("pairs", e.pairs);
  s.get("samples", e.samples);
  if (const json* v = s.object("grid")) {
    Section g(*v, s.at("grid"));
    g.get("x_min", e.grid.x_min);
    g.get("x_max", e.grid.x_max);
    g.get("y_min", e.grid.y_min);
    g.get("y_max", e.grid.y_max);
    g.get("resolution", e.grid.resolution);
    g.finish();
  }
  if (const json* v = s.object("attack")) {
    Section a(*v, s.at("attack"));
    std::string kind = attack_to_string(e.attack.kind);
    a.get("kind", kind);
    e.attack.kind = attack_from_string(kind, a.at("kind"));
    a.get("epsilon", e.attack.epsilon);
    a.get("step_size", e.attack.step_size);
    a.get("iterations", e.attack.iterations);
    a.get("clamp_min", e.attack.clamp_min);
    a.get("clamp_max", e.attack.clamp_max);
    a.get("random_start", e.attack.random_start);
    a.finish();
  }
  if (const json* v = s.object("ood_data")) e.ood_data = read_data(*v, s.at("ood_data"));
  s.finish();
  e.validate(path);
  return e;
}

// ------------------------------------------------------------------ writers

json mix_json(const MixConfig& m) {
  return json{{"alpha", m.alpha}, {"sigma", m.sigma}, {"metric", to_string(m.metric)}};
}

json optimizer_json(const OptimizerSettings& o) {
  return json{{"kind", to_string(o.kind)}, {"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

json data_json(const DataConfig& d) {
  json j{{"source", d.source}, {"n", d.n}, {"std", d.std}, {"path", d.path},
         {"labels_path", d.labels_path}, {"header", d.header}};
  json centers = json::array();
  for (const auto& c : d.centers) centers.push_back({c[0], c[1]});
  j["centers"] = centers;
  if (d.label_column) j["label_column"] = *d.label_column;
  return j;
}

json gan_json(const GanConfig& g) {
  return json{{"latent_dim", g.latent_dim},
              {"generator", detail::spec_to_json(g.generator)},
              {"critic", detail::spec_to_json(g.critic)},
              {"objective", to_string(g.objective)},
              {"clip", g.clip},
              {"critic_steps", g.critic_steps},
              {"mix", mix_json(g.mix)},
              {"adaptivemix_weight", g.adaptivemix_weight},
              {"adaptivemix_to_generator", g.adaptivemix_to_generator},
              {"optimizer", optimizer_json(g.optimizer)},
              {"batch_size", g.batch_size},
              {"total_steps", g.total_steps},
              {"log_every", g.log_every}};
}

json classifier_json(const ClassifierConfig& c) {
  return json{{"feature", detail::spec_to_json(c.feature)},
              {"classes", c.classes},
              {"mix", mix_json(c.mix)},
              {"adaptivemix_weight", c.adaptivemix_weight},
              {"cross_entropy_weight", c.cross_entropy_weight},
              {"mix_inputs", c.mix_inputs},
              {"optimizer", optimizer_json(c.optimizer)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size}};
}

json eval_json(const EvalConfig& e) {
  json j{{"instrument", e.instrument},
         {"checkpoint", e.checkpoint},
         {"pairs", e.pairs},
         {"samples", e.samples},
         {"grid", {{"x_min", e.grid.x_min}, {"x_max", e.grid.x_max}, {"y_min", e.grid.y_min},
                   {"y_max", e.grid.y_max}, {"resolution", e.grid.resolution}}},
         {"attack", {{"kind", attack_to_string(e.attack.kind)}, {"epsilon", e.attack.epsilon},
                     {"step_size", e.attack.step_size}, {"iterations", e.attack.iterations},
                     {"clamp_min", e.attack.clamp_min}, {"clamp_max", e.attack.clamp_max},
                     {"random_start", e.attack.random_start}}}};
  if (e.ood_data) j["ood_data"] = data_json(*e.ood_data);
  return j;
}

}  // namespace

// ------------------------------------------------------------------ public

void DataConfig::validate(const std::string& at) const {
  if (std::find(kSources.begin(), kSources.end(), source) == kSources.end()) {
    throw ConfigError(detail::join_path(at, "source"),
                      "unknown source '" + source + "' (expected nine-gaussians, three-circles, modes, csv or idx)");
  }
  const bool generated = source != "csv" && source != "idx";
  if (generated && n == 0) throw ConfigError(detail::join_path(at, "n"), "must be positive");
  if (source == "modes") {
    if (centers.empty()) throw ConfigError(detail::join_path(at, "centers"), "modes needs at least one center");
    validated(at, [&] { ModeSpec{centers, std}.validate(); });
  }
  if (!generated && path.empty()) throw ConfigError(detail::join_path(at, "path"), "required for " + source);
  if (source == "idx" && labels_path.empty()) throw ConfigError(detail::join_path(at, "labels_path"), "required for idx");
}

Dataset make_dataset(const DataConfig& cfg, Rng& rng) {
  cfg.validate("data");
  if (cfg.source == "nine-gaussians") return gen_nine_gaussians(cfg.n, rng);
  if (cfg.source == "three-circles") return gen_three_circles(cfg.n, rng);
  if (cfg.source == "modes") return sample_modes(ModeSpec{cfg.centers, cfg.std}, cfg.n, rng, "modes");
  if (cfg.source == "idx") return load_idx(cfg.path, cfg.labels_path);
  CsvOptions opt;
  opt.header = cfg.header;
  opt.label_column = cfg.label_column;
  return load_csv(cfg.path, opt);
}

const std::vector<std::string>& eval_instruments() {
  static const std::vector<std::string> names = {"lipschitz",   "confidence-map", "mode-metrics",
                                                 "compactness", "ood",            "attack"};
  return names;
}

void EvalConfig::validate(const std::string& at) const {
  const auto& names = eval_instruments();
  if (std::find(names.begin(), names.end(), instrument) == names.end()) {
    throw ConfigError(detail::join_path(at, "instrument"),
                      "unknown instrument '" + instrument +
                          "' (expected lipschitz, confidence-map, mode-metrics, compactness, ood or attack)");
  }
  if (pairs == 0) throw ConfigError(detail::join_path(at, "pairs"), "must be positive");
  if (samples < 2) throw ConfigError(detail::join_path(at, "samples"), "must be at least 2");
  const std::string g = detail::join_path(at, "grid");
  if (!(grid.x_min < grid.x_max)) throw ConfigError(g, "x_min must be below x_max");
  if (!(grid.y_min < grid.y_max)) throw ConfigError(g, "y_min must be below y_max");
  if (grid.resolution < 2) throw ConfigError(detail::join_path(g, "resolution"), "must be at least 2");
  validated(detail::join_path(at, "attack"), [&] { attack.validate(); });
  if (instrument == "ood" && !ood_data) throw ConfigError(detail::join_path(at, "ood_data"), "required for ood");
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  Section s(j, "");
  RunConfig cfg;
  s.get("seed", cfg.seed);
  s.get("out", cfg.out);
  if (const json* v = s.object("data")) cfg.data = read_data(*v, "data");
  if (const json* v = s.object("gan")) cfg.gan = read_gan(*v, "gan");
  if (const json* v = s.object("classifier")) cfg.classifier = read_classifier(*v, "classifier");
  if (const json* v = s.object("eval")) cfg.eval = read_eval(*v, "eval");
  s.finish();
  if (cfg.gan) cfg.gan->seed = cfg.seed;
  if (cfg.classifier) cfg.classifier->seed = cfg.seed;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  json j{{"seed", cfg.seed}};
  if (!cfg.out.empty()) j["out"] = cfg.out;
  if (cfg.data) j["data"] = data_json(*cfg.data);
  if (cfg.gan) j["gan"] = gan_json(*cfg.gan);
  if (cfg.classifier) j["classifier"] = classifier_json(*cfg.classifier);
  if (cfg.eval) j["eval"] = eval_json(*cfg.eval);
  return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
  // The output location does not change what a run computes.
  RunConfig keyed = cfg;
  keyed.out.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump_run_config(keyed)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace amix
