#include "amix/training.hpp"

#include <algorithm>
#include <cmath>

#include "amix/error.hpp"

namespace amix {

std::string to_string(GanObjective o) {
  switch (o) {
    case GanObjective::StdGan: return "std-gan";
    case GanObjective::WganClip: return "wgan-clip";
    case GanObjective::WganClipAdaptiveMix: return "wgan-clip+adaptivemix";
  }
  return "wgan-clip";
}

GanObjective objective_from_string(const std::string& name) {
  if (name == "std-gan") return GanObjective::StdGan;
  if (name == "wgan-clip") return GanObjective::WganClip;
  if (name == "wgan-clip+adaptivemix") return GanObjective::WganClipAdaptiveMix;
  throw InvalidArgument("unknown objective '" + name + "' (expected std-gan, wgan-clip or wgan-clip+adaptivemix)");
}

void GanConfig::validate() const {
  generator.validate();
  critic.validate();
  mix.validate();
  optimizer.validate();
  if (latent_dim == 0) throw InvalidArgument("gan: latent_dim must be positive");
  if (generator.input_dim() != latent_dim) throw InvalidArgument("gan: generator input width must equal latent_dim");
  if (generator.output_dim() != critic.input_dim()) {
    throw InvalidArgument("gan: generator output width must equal critic input width");
  }
  if (objective != GanObjective::StdGan && !(clip > 0.0)) throw InvalidArgument("gan: clip must be positive");
  if (critic_steps < 1) throw InvalidArgument("gan: critic_steps must be at least 1");
  if (!(adaptivemix_weight >= 0.0)) throw InvalidArgument("gan: adaptivemix_weight must be non-negative");
  if (batch_size < 2) throw InvalidArgument("gan: batch_size must be at least 2");
  if (log_every < 1) throw InvalidArgument("gan: log_every must be at least 1");
}

GanStreams GanStreams::from_seed(std::uint64_t seed) {
  return GanStreams{Rng::stream(seed, "init"), Rng::stream(seed, "data"), Rng::stream(seed, "noise"),
                    Rng::stream(seed, "mix"), Rng::stream(seed, "eval")};
}

GanModels init_gan(const GanConfig& cfg, Rng& init_rng) {
  cfg.validate();
  GanModels m;
  m.generator = init_network(cfg.generator, init_rng);
  m.critic = init_network(cfg.critic, init_rng);
  m.generator_opt = Optimizer(cfg.optimizer);
  m.critic_opt = Optimizer(cfg.optimizer);
  return m;
}

Tensor sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng) {
  Tensor z(Shape{batch, latent_dim});
  for (auto& v : z.storage()) v = rng.normal();
  return z;
}

Tensor generate(const Network& generator, std::size_t n, std::size_t latent_dim, Rng& rng) {
  return generator.forward(sample_latent(n, latent_dim, rng));
}

namespace {

constexpr double kProbabilityFloor = 1e-7;

std::vector<Var> bind_constant(Tape& tape, const Network& net) {
  std::vector<Var> out;
  for (const auto& p : net.parameters()) out.push_back(tape.constant(p.value));
  return out;
}

std::vector<Tensor> gradients_for(const Gradients& grads, const std::vector<Var>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Var p : params) out.push_back(grads[p]);
  return out;
}

void clip_parameters(Network& net, double c) {
  for (auto& p : net.parameters()) {
    for (auto& v : p.value.storage()) v = std::clamp(v, -c, c);
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
}

// Realness of every row: J(F(x)) for the Wasserstein critic, its sigmoid for
// the standard GAN.
Var realness(const Network& critic, std::span<const Var> params, Var x, bool probability) {
  Var score = average_head(critic.forward(params, x));
  return probability ? sigmoid(score) : score;
}

Var log_clamped(Var p) { return log(clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor)); }

}  // namespace

CriticObjective critic_objective(const Network& critic, const Tensor& real_x, const Tensor& fake_x,
                                 std::span<const double> lambda, const GanConfig& cfg, Rng& mix,
                                 double adversarial_weight, double ada_weight) {
  if (real_x.shape() != fake_x.shape()) throw ShapeError("critic_objective", real_x.shape(), fake_x.shape());
  Tape tape;
  const std::vector<Var> params = critic.bind(tape);
  Var xr = tape.constant(real_x);
  Var xf = tape.constant(fake_x);
  Var fr = critic.forward(params, xr);
  Var ff = critic.forward(params, xf);

  Var adversarial;
  if (cfg.objective == GanObjective::StdGan) {
    Var dr = sigmoid(average_head(fr));
    Var df = sigmoid(average_head(ff));
    adversarial = neg(add(mean(log_clamped(dr)), mean(log_clamped(add_scalar(neg(df), 1.0)))));
  } else {
    adversarial = sub(mean(average_head(ff)), mean(average_head(fr)));
  }

  Var fh = critic.forward(params, mix_rows(xr, xf, lambda));
  Var l_ada = adaptivemix_loss_from_features(fr, ff, fh, lambda, cfg.mix, mix);
  Var loss = adversarial_weight == 1.0 ? adversarial : scale(adversarial, adversarial_weight);
  if (ada_weight > 0.0) loss = add(loss, scale(l_ada, ada_weight));

  CriticObjective out;
  out.adversarial = adversarial.value().item();
  out.l_ada = l_ada.value().item();
  out.total = loss.value().item();
  if (std::isfinite(out.total)) out.gradients = gradients_for(tape.backward(loss), params);
  return out;
}

namespace {

struct CriticResult {
  double loss = 0.0;
  double l_ada = 0.0;
};

// One critic update. The AdaptiveMix loss on (real, fake) pairs is always
// evaluated so every objective reports it; it joins the objective only when
// `ada_weight` > 0.
CriticResult critic_update(GanModels& m, const RealSource& real, const GanConfig& cfg, GanStreams& s,
                           double ada_weight) {
  const Tensor real_x = real();
  const Tensor fake_x = generate(m.generator, real_x.rows(), cfg.latent_dim, s.noise);
  const std::vector<double> lambda = sample_lambda(cfg.mix, real_x.rows(), s.mix);
  const CriticObjective obj = critic_objective(m.critic, real_x, fake_x, lambda, cfg, s.mix, 1.0, ada_weight);
  require_finite(obj.total, "critic loss");
  m.critic_opt.apply(parameter_pointers(m.critic), obj.gradients);
  if (cfg.objective != GanObjective::StdGan) clip_parameters(m.critic, cfg.clip);
  return CriticResult{obj.total, obj.l_ada};
}

double generator_update(GanModels& m, const RealSource& real, const GanConfig& cfg, GanStreams& s,
                        double ada_weight) {
  const bool std_gan = cfg.objective == GanObjective::StdGan;
  Tape tape;
  const std::vector<Var> gen_params = m.generator.bind(tape);
  const std::vector<Var> critic_params = bind_constant(tape, m.critic);
  Var z = tape.constant(sample_latent(cfg.batch_size, cfg.latent_dim, s.noise));
  Var fake = m.generator.forward(gen_params, z);
  Var ff = m.critic.forward(critic_params, fake);

  Var loss;
  if (std_gan) {
    loss = neg(mean(log_clamped(sigmoid(average_head(ff)))));
  } else {
    loss = neg(mean(average_head(ff)));
  }

  if (ada_weight > 0.0 && cfg.adaptivemix_to_generator) {
    const Tensor real_x = real();
    if (real_x.rows() != cfg.batch_size) throw ShapeError("generator update", real_x.shape(), fake.shape());
    const std::vector<double> lambda = sample_lambda(cfg.mix, cfg.batch_size, s.mix);
    Var xr = tape.constant(real_x);
    Var fr = m.critic.forward(critic_params, xr);
    Var fh = m.critic.forward(critic_params, mix_rows(xr, fake, lambda));
    Var l_ada = adaptivemix_loss_from_features(fr, ff, fh, lambda, cfg.mix, s.mix);
    loss = add(loss, scale(l_ada, ada_weight));
  }

  const double value = loss.value().item();
  require_finite(value, "generator loss");
  const Gradients grads = tape.backward(loss);
  m.generator_opt.apply(parameter_pointers(m.generator), gradients_for(grads, gen_params));
  return value;
}

StepMetrics run_step(GanModels& m, const RealSource& real, const GanConfig& cfg, GanStreams& s, double ada_weight) {
  StepMetrics out;
  for (std::size_t k = 0; k < cfg.critic_steps; ++k) {
    const CriticResult r = critic_update(m, real, cfg, s, ada_weight);
    out.critic_loss = r.loss;
    out.l_ada = r.l_ada;
  }
  out.gen_loss = generator_update(m, real, cfg, s, ada_weight);
  out.critic_norm = parameter_norm(m.critic);
  out.gen_norm = parameter_norm(m.generator);
  return out;
}

}  // namespace

StepMetrics wgan_step(GanModels& models, const RealSource& real, const GanConfig& cfg, GanStreams& streams) {
  if (cfg.objective == GanObjective::StdGan) throw InvalidArgument("wgan_step: objective must be a wgan variant");
  return run_step(models, real, cfg, streams, 0.0);
}

StepMetrics adaptivemix_gan_step(GanModels& models, const RealSource& real, const GanConfig& cfg,
                                 GanStreams& streams) {
  if (cfg.objective != GanObjective::WganClipAdaptiveMix) {
    throw InvalidArgument("adaptivemix_gan_step: objective must be wgan-clip+adaptivemix");
  }
  return run_step(models, real, cfg, streams, cfg.adaptivemix_weight);
}

StepMetrics stdgan_step(GanModels& models, const RealSource& real, const GanConfig& cfg, GanStreams& streams) {
  if (cfg.objective != GanObjective::StdGan) throw InvalidArgument("stdgan_step: objective must be std-gan");
  return run_step(models, real, cfg, streams, 0.0);
}

StepMetrics gan_step(GanModels& models, const RealSource& real, const GanConfig& cfg, GanStreams& streams) {
  switch (cfg.objective) {
    case GanObjective::StdGan: return stdgan_step(models, real, cfg, streams);
    case GanObjective::WganClip: return wgan_step(models, real, cfg, streams);
    case GanObjective::WganClipAdaptiveMix: return adaptivemix_gan_step(models, real, cfg, streams);
  }
  throw InvalidArgument("gan_step: unknown objective");
}

Tensor critic_scores(const Network& critic, const Tensor& x, GanObjective objective) {
  Tape tape;
  const std::vector<Var> params = bind_constant(tape, critic);
  return realness(critic, params, tape.constant(x), objective == GanObjective::StdGan).value();
}

const std::vector<std::string>& gan_log_columns() {
  static const std::vector<std::string> columns{"step",        "critic_loss", "gen_loss",        "l_ada",
                                                "critic_norm", "gen_norm",    "lipschitz_ratio"};
  return columns;
}

GanRun train_gan(const GanConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (data.dim() != cfg.critic.input_dim()) {
    throw ShapeError("train_gan: data vs critic input", data.samples.shape(), Shape{0, cfg.critic.input_dim()});
  }
  GanRun run{{}, GanStreams::from_seed(cfg.seed), 0, {}};
  run.models = init_gan(cfg, run.streams.init);
  const RealSource real = [&] { return sample_batch(data, cfg.batch_size, run.streams.data).samples; };

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    StepMetrics metrics;
    try {
      metrics = gan_step(run.models, real, cfg, run.streams);
    } catch (const std::exception& e) {
      throw TrainingError(step, e.what());
    }
    run.step = step;
    if (step % cfg.log_every == 0 || step == cfg.total_steps) {
      const Tensor probe_real = sample_batch(data, cfg.batch_size, run.streams.eval).samples;
      const Tensor probe_fake = generate(run.models.generator, cfg.batch_size, cfg.latent_dim, run.streams.eval);
      double ratio = 0.0;
      try {
        ratio = lipschitz_ratio(run.models.critic, probe_real, probe_fake);
      } catch (const std::exception& e) {
        throw TrainingError(step, e.what());
      }
      run.log.push_back(GanLogRow{step, metrics, ratio});
    }
  }
  return run;
}

// ------------------------------------------------------------ classifier

void ClassifierConfig::validate() const {
  feature.validate();
  mix.validate();
  optimizer.validate();
  if (classes < 2) throw InvalidArgument("classifier: need at least two classes");
  if (classes > feature.output_dim()) {
    throw InvalidArgument("classifier: " + std::to_string(classes) + " classes exceed embedding dimension " +
                          std::to_string(feature.output_dim()));
  }
  if (!(adaptivemix_weight >= 0.0) || !(cross_entropy_weight >= 0.0)) {
    throw InvalidArgument("classifier: loss weights must be non-negative");
  }
  if (batch_size < 1) throw InvalidArgument("classifier: batch_size must be at least 1");
}

ClassifierStreams ClassifierStreams::from_seed(std::uint64_t seed) {
  return ClassifierStreams{Rng::stream(seed, "init"), Rng::stream(seed, "data"), Rng::stream(seed, "mix")};
}

ClassifierRun init_classifier(const ClassifierConfig& cfg) {
  cfg.validate();
  ClassifierRun run{{}, Optimizer(cfg.optimizer), ClassifierStreams::from_seed(cfg.seed), 0, 0, {}};
  run.model.feature = init_network(cfg.feature, run.streams.init);
  run.model.head = orthogonal_init(cfg.classes, cfg.feature.output_dim(), run.streams.init);
  return run;
}

ClassifierLogRow classifier_epoch(ClassifierRun& run, const ClassifierConfig& cfg, const Dataset& data) {
  if (!data.labels) throw InvalidArgument("train_classifier: dataset is unlabeled");
  if (data.classes() > cfg.classes) throw InvalidArgument("train_classifier: labels exceed configured classes");

  Batcher batches(data, cfg.batch_size, run.streams.data, true);
  Batch batch;
  double loss_sum = 0.0, ce_sum = 0.0, ada_sum = 0.0;
  std::size_t seen = 0;
  while (batches.next(batch)) {
    const std::size_t m = batch.samples.rows();
    const std::vector<std::size_t> partner = permutation(m, run.streams.mix);
    const std::vector<double> lambda =
        cfg.mix_inputs ? sample_lambda(cfg.mix, m, run.streams.mix) : std::vector<double>(m, 1.0);
    std::vector<std::size_t> labels_j(m);
    for (std::size_t r = 0; r < m; ++r) labels_j[r] = batch.labels[partner[r]];

    Tape tape;
    const std::vector<Var> params = run.model.feature.bind(tape);
    Var head = tape.leaf(run.model.head.weight);
    Var x_i = tape.constant(batch.samples);
    Var x_j = tape.constant(batch.samples.gather_rows(partner));
    Var f_hat = run.model.feature.forward(params, mix_rows(x_i, x_j, lambda));
    Var probs = softmax_probs(cosine_logits(head, f_hat));
    Var ce = mixed_cross_entropy(probs, batch.labels, labels_j, lambda, &run.clamped_probabilities);
    Var loss = scale(ce, cfg.cross_entropy_weight);
    double ada_value = 0.0;
    if (cfg.adaptivemix_weight > 0.0) {
      Var f_i = run.model.feature.forward(params, x_i);
      Var f_j = run.model.feature.forward(params, x_j);
      Var l_ada = adaptivemix_loss_from_features(f_i, f_j, f_hat, lambda, cfg.mix, run.streams.mix);
      ada_value = l_ada.value().item();
      loss = add(loss, scale(l_ada, cfg.adaptivemix_weight));
    }
    const double loss_value = loss.value().item();
    if (!std::isfinite(loss_value)) throw NumericError("classifier loss is not finite");

    const Gradients grads = tape.backward(loss);
    std::vector<Tensor*> ptrs = parameter_pointers(run.model.feature);
    ptrs.push_back(&run.model.head.weight);
    std::vector<Tensor> g = gradients_for(grads, params);
    g.push_back(grads[head]);
    run.opt.apply(ptrs, g);

    const double w = static_cast<double>(m);
    loss_sum += w * loss_value;
    ce_sum += w * ce.value().item();
    ada_sum += w * ada_value;
    seen += m;
  }

  ++run.epoch;
  const double n = static_cast<double>(seen);
  ClassifierLogRow row{run.epoch, loss_sum / n, ce_sum / n, ada_sum / n,
                       accuracy(run.model, data.samples, *data.labels)};
  run.log.push_back(row);
  return row;
}

ClassifierRun train_classifier(const ClassifierConfig& cfg, const Dataset& data) {
  ClassifierRun run = init_classifier(cfg);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    try {
      classifier_epoch(run, cfg, data);
    } catch (const TrainingError&) {
      throw;
    } catch (const std::exception& ex) {
      throw TrainingError(e + 1, ex.what());
    }
  }
  return run;
}

const std::vector<std::string>& classifier_log_columns() {
  static const std::vector<std::string> columns{"epoch", "loss", "mixed_ce", "l_ada", "train_accuracy"};
  return columns;
}

}  // namespace amix
