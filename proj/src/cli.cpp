#include "amix/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "CLI11.hpp"
#include "amix/checkpoint.hpp"
#include "amix/config.hpp"
#include "amix/eval.hpp"
#include "json.hpp"

namespace amix {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
};

/// Everything a command needs, resolved before any file is written.
struct Plan {
  RunConfig cfg;
  fs::path out;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Plan make_plan(const Options& opt) {
  Plan p;
  p.cfg = opt.config.empty() ? RunConfig{} : load_run_config(opt.config);
  if (opt.seed) p.cfg.seed = *opt.seed;
  if (p.cfg.gan) p.cfg.gan->seed = p.cfg.seed;
  if (p.cfg.classifier) p.cfg.classifier->seed = p.cfg.seed;
  p.out = opt.out ? fs::path(*opt.out) : fs::path(p.cfg.out.empty() ? "out" : p.cfg.out);
  // Artifacts must not depend on where they are written.
  p.cfg.out.clear();
  return p;
}

/// Creates the output directory and echoes the resolved config into it.
void open_output(const Plan& p) {
  std::error_code ec;
  fs::create_directories(p.out, ec);
  if (ec) throw FormatError(FormatError::Kind::Io, "cannot create " + p.out.string() + ": " + ec.message());
  write_text(p.out / "resolved-config.json", dump_run_config(p.cfg));
}

Dataset dataset_for(const RunConfig& cfg, const std::optional<DataConfig>& fallback = {}) {
  const DataConfig d = cfg.data ? *cfg.data : fallback ? *fallback : DataConfig{};
  Rng rng = Rng::stream(cfg.seed, "dataset");
  return make_dataset(d, rng);
}

std::vector<std::string> data_columns(const Dataset& ds) {
  std::vector<std::string> cols;
  if (ds.dim() == 2) {
    cols = {"x", "y"};
  } else {
    for (std::size_t c = 0; c < ds.dim(); ++c) cols.push_back("x" + std::to_string(c));
  }
  if (ds.labels) cols.push_back("label");
  return cols;
}

// ------------------------------------------------------------------ commands

int gen_data(const Options& opt, std::ostream& out) {
  Plan p = make_plan(opt);
  if (!p.cfg.data) p.cfg.data = DataConfig{};
  p.cfg.data->validate("data");
  if (p.cfg.data->source == "csv" || p.cfg.data->source == "idx") {
    throw ConfigError("data.source", "gen-data needs a generated source, not " + p.cfg.data->source);
  }
  const Dataset ds = dataset_for(p.cfg);
  open_output(p);
  write_csv(p.out / "data.csv", ds, data_columns(ds));
  out << "wrote " << ds.size() << " rows to " << (p.out / "data.csv").string() << "\n";
  return kExitOk;
}

int train_gan_cmd(const Options& opt, std::ostream& out) {
  Plan p = make_plan(opt);
  if (!p.cfg.gan) throw ConfigError("gan", "train-gan needs a gan section");
  const Dataset ds = dataset_for(p.cfg);
  if (ds.dim() != p.cfg.gan->critic.input_dim()) {
    throw ConfigError("gan.critic.widths", "input width " + std::to_string(p.cfg.gan->critic.input_dim()) +
                                               " does not match data dimension " + std::to_string(ds.dim()));
  }
  open_output(p);
  const GanRun run = train_gan(*p.cfg.gan, ds);
  std::string csv;
  const auto& cols = gan_log_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) csv += (c ? "," : "") + cols[c];
  csv += "\n";
  for (const auto& r : run.log) {
    const auto& m = r.metrics;
    csv += std::to_string(r.step) + "," + fmt(m.critic_loss) + "," + fmt(m.gen_loss) + "," + fmt(m.l_ada) + "," +
           fmt(m.critic_norm) + "," + fmt(m.gen_norm) + "," + fmt(r.lipschitz_ratio) + "\n";
  }
  write_text(p.out / "metrics.csv", csv);
  save_checkpoint(p.out / "checkpoint.json", make_checkpoint(p.cfg, run));
  out << "trained " << run.step << " steps; artifacts in " << p.out.string() << "\n";
  return kExitOk;
}

int train_classifier_cmd(const Options& opt, std::ostream& out) {
  Plan p = make_plan(opt);
  if (!p.cfg.classifier) throw ConfigError("classifier", "train-classifier needs a classifier section");
  const Dataset ds = dataset_for(p.cfg);
  if (!ds.labels) throw ConfigError("data", "train-classifier needs labeled data");
  if (ds.dim() != p.cfg.classifier->feature.input_dim()) {
    throw ConfigError("classifier.feature.widths", "input width " +
                                                       std::to_string(p.cfg.classifier->feature.input_dim()) +
                                                       " does not match data dimension " + std::to_string(ds.dim()));
  }
  if (ds.classes() > p.cfg.classifier->classes) {
    throw ConfigError("classifier.classes", "data has " + std::to_string(ds.classes()) + " classes");
  }
  open_output(p);
  const ClassifierRun run = train_classifier(*p.cfg.classifier, ds);
  std::string csv;
  const auto& cols = classifier_log_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) csv += (c ? "," : "") + cols[c];
  csv += "\n";
  for (const auto& r : run.log) {
    csv += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.mixed_ce) + "," + fmt(r.l_ada) + "," +
           fmt(r.train_accuracy) + "\n";
  }
  write_text(p.out / "metrics.csv", csv);
  save_checkpoint(p.out / "checkpoint.json", make_checkpoint(p.cfg, run));
  out << "trained " << run.epoch << " epochs; artifacts in " << p.out.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ eval

json lipschitz_json(const LipschitzReport& r, bool gan) {
  json j{{"real", r.real}, {"pairs", r.pairs}, {"seed", r.seed}};
  if (gan) {
    j["generated"] = r.generated;
    j["both"] = r.both;
  }
  return j;
}

std::vector<std::size_t> labels_of(const Dataset& ds, const char* what) {
  if (!ds.labels) throw ConfigError("data", std::string(what) + " needs labeled data");
  return *ds.labels;
}

int eval_cmd(const Options& opt, std::ostream& out) {
  Plan p = make_plan(opt);
  if (!p.cfg.eval) p.cfg.eval = EvalConfig{};
  EvalConfig& e = *p.cfg.eval;
  if (!opt.checkpoint.empty()) e.checkpoint = opt.checkpoint;
  if (e.checkpoint.empty()) throw ConfigError("eval.checkpoint", "required");
  e.validate("eval");
  const Checkpoint ckpt = load_checkpoint(e.checkpoint);
  const bool gan = ckpt.kind == "gan";
  const std::string& inst = e.instrument;
  const bool needs_gan = inst == "confidence-map" || inst == "mode-metrics";
  const bool needs_classifier = inst == "compactness" || inst == "ood" || inst == "attack";
  if (needs_gan && !gan) throw ConfigError("eval.instrument", inst + " needs a gan checkpoint");
  if (needs_classifier && gan) throw ConfigError("eval.instrument", inst + " needs a classifier checkpoint");

  const Network& features = gan ? ckpt.networks.at("critic") : ckpt.networks.at("feature");
  const Dataset ds = dataset_for(p.cfg, ckpt.config.data);
  if (ds.dim() != features.spec().input_dim()) {
    throw ConfigError("data", "dimension " + std::to_string(ds.dim()) + " does not match the checkpoint input width " +
                                  std::to_string(features.spec().input_dim()));
  }
  Rng rng = Rng::stream(p.cfg.seed, "eval");
  const fs::path base = p.out / inst;

  if (inst == "lipschitz") {
    LipschitzReport rep;
    if (gan) {
      const Tensor generated = generate(ckpt.networks.at("generator"), e.samples, ckpt.config.gan->latent_dim, rng);
      rep = lipschitz_report(features, ds.samples, generated, e.pairs, rng, p.cfg.seed);
    } else {
      if (ds.size() < 2) throw ConfigError("data", "lipschitz needs at least two samples");
      std::vector<std::size_t> a, b;
      for (std::size_t k = 0; k < e.pairs; ++k) {
        const std::size_t i = rng.index(ds.size());
        std::size_t j = rng.index(ds.size() - 1);
        a.push_back(i);
        b.push_back(j >= i ? j + 1 : j);
      }
      rep.real = lipschitz_ratio(features, ds.samples.gather_rows(a), ds.samples.gather_rows(b));
      rep.pairs = e.pairs;
      rep.seed = p.cfg.seed;
    }
    open_output(p);
    write_json(base.string() + ".json", lipschitz_json(rep, gan));
    out << "lipschitz real=" << fmt(rep.real) << (gan ? " both=" + fmt(rep.both) : "") << "\n";
  } else if (inst == "confidence-map") {
    const GanObjective objective = ckpt.config.gan->objective;
    const auto d = [&](const Tensor& x) { return critic_scores(features, x, objective); };
    if (features.spec().input_dim() != 2) throw ConfigError("eval.instrument", "confidence-map needs 2D inputs");
    open_output(p);
    const ConfidenceMap map = confidence_map(d, e.grid);
    write_map_pgm(base.string() + ".pgm", map);
    write_map_csv(base.string() + ".csv", map);
    out << "confidence map " << e.grid.resolution << "x" << e.grid.resolution << "\n";
  } else if (inst == "mode-metrics") {
    const DataConfig d = p.cfg.data ? *p.cfg.data : ckpt.config.data ? *ckpt.config.data : DataConfig{};
    ModeSpec modes;
    if (d.source == "nine-gaussians") {
      modes = nine_gaussian_modes();
    } else if (d.source == "modes") {
      modes = ModeSpec{d.centers, d.std};
    } else {
      throw ConfigError("data.source", "mode-metrics needs nine-gaussians or modes");
    }
    const Tensor generated = generate(ckpt.networks.at("generator"), e.samples, ckpt.config.gan->latent_dim, rng);
    const ModeMetrics mm = mode_metrics(generated, modes);
    open_output(p);
    write_json(base.string() + ".json", json{{"covered", mm.covered},
                                             {"modes", modes.modes()},
                                             {"high_quality_fraction", mm.high_quality_fraction},
                                             {"per_mode", mm.per_mode},
                                             {"samples", e.samples}});
    out << "covered " << mm.covered << "/" << modes.modes() << " hq=" << fmt(mm.high_quality_fraction) << "\n";
  } else if (inst == "compactness") {
    const auto labels = labels_of(ds, "compactness");
    const Compactness c = compactness(features.forward(ds.samples), labels, ckpt.head->classes());
    json per = json::array();
    for (const auto& v : c.per_class) per.push_back(v ? json(*v) : json(nullptr));
    open_output(p);
    write_json(base.string() + ".json", json{{"per_class", per}, {"total", c.total}});
    out << "compactness total=" << fmt(c.total) << "\n";
  } else if (inst == "ood") {
    const auto labels = labels_of(ds, "ood");
    Rng ood_rng = Rng::stream(p.cfg.seed, "ood-data");
    const Dataset ood = make_dataset(*e.ood_data, ood_rng);
    if (ood.dim() != ds.dim()) throw ConfigError("eval.ood_data", "dimension does not match the in-distribution data");
    const Tensor id_emb = features.forward(ds.samples);
    const OodModel model = fit_class_directions(id_emb, labels, ckpt.head->classes(), rng);
    const auto id_scores = ood_scores(model, id_emb);
    const auto ood_s = ood_scores(model, features.forward(ood.samples));
    const OodF1 f1 = ood_f1(id_scores, ood_s);
    open_output(p);
    write_json(base.string() + ".json", json{{"f1", f1.f1},
                                             {"threshold", f1.threshold},
                                             {"true_positive", f1.true_positive},
                                             {"false_positive", f1.false_positive},
                                             {"false_negative", f1.false_negative},
                                             {"true_negative", f1.true_negative},
                                             {"min_id_score", *std::min_element(id_scores.begin(), id_scores.end())}});
    std::string csv = "set,index,score\n";
    for (std::size_t i = 0; i < id_scores.size(); ++i) csv += "id," + std::to_string(i) + "," + fmt(id_scores[i]) + "\n";
    for (std::size_t i = 0; i < ood_s.size(); ++i) csv += "ood," + std::to_string(i) + "," + fmt(ood_s[i]) + "\n";
    write_text(base.string() + ".csv", csv);
    out << "ood best f1=" << fmt(f1.f1) << "\n";
  } else {  // attack
    const auto labels = labels_of(ds, "attack");
    const Classifier model{features, *ckpt.head};
    Rng attack_rng = Rng::stream(p.cfg.seed, "attack");
    const double clean = accuracy(model, ds.samples, labels);
    const double robust = robust_accuracy(model, ds, e.attack, attack_rng);
    open_output(p);
    write_json(base.string() + ".json", json{{"kind", e.attack.kind == AttackKind::Fgsm ? "fgsm" : "pgd"},
                                             {"epsilon", e.attack.epsilon},
                                             {"clean_accuracy", clean},
                                             {"robust_accuracy", robust}});
    out << "clean=" << fmt(clean) << " robust=" << fmt(robust) << "\n";
  }
  return kExitOk;
}

int inspect_cmd(const Options& opt, std::ostream& out) {
  if (opt.checkpoint.empty()) throw ConfigError("checkpoint", "required");
  const Checkpoint c = load_checkpoint(opt.checkpoint);
  out << "format_version: " << kCheckpointVersion << "\n";
  out << "kind: " << c.kind << "\n";
  out << "step: " << c.step << "\n";
  out << "config_hash: " << config_hash(c.config) << "\n";
  for (const auto& [name, net] : c.networks) {
    const auto& s = net.spec();
    out << "network " << name << ": widths";
    for (auto w : s.widths) out << " " << w;
    out << "; hidden";
    for (const auto& a : s.hidden) out << " " << to_string(a);
    out << "; output " << to_string(s.output) << "; parameters " << net.parameter_count() << "\n";
  }
  if (c.head) out << "head: " << c.head->classes() << "x" << c.head->dim() << "\n";
  out << "parameters: " << c.parameter_count() << "\n";
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AdaptiveMix toy-scale experiment runner", "amixlab"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "run config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "root seed, overrides the config");
  };
  std::function<int()> action;
  auto* gen = app.add_subcommand("gen-data", "write a generated dataset as CSV");
  common(gen);
  gen->callback([&] { action = [&] { return gen_data(opt, out); }; });
  auto* tg = app.add_subcommand("train-gan", "train a GAN on 2D data");
  common(tg);
  tg->callback([&] { action = [&] { return train_gan_cmd(opt, out); }; });
  auto* tc = app.add_subcommand("train-classifier", "train an orthogonal-head classifier");
  common(tc);
  tc->callback([&] { action = [&] { return train_classifier_cmd(opt, out); }; });
  auto* ev = app.add_subcommand("eval", "run one evaluation instrument on a checkpoint");
  common(ev);
  ev->add_option("--checkpoint", opt.checkpoint, "checkpoint to evaluate, overrides eval.checkpoint");
  ev->callback([&] { action = [&] { return eval_cmd(opt, out); }; });
  auto* in = app.add_subcommand("inspect", "summarize a checkpoint");
  in->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
  in->callback([&] { action = [&] { return inspect_cmd(opt, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << (e.kind() == FormatError::Kind::Parse || e.kind() == FormatError::Kind::Version ? "parse error: "
                                                                                             : "i/o error: ")
        << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace amix
