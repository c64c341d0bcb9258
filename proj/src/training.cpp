#include "cotk/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cotk/io.hpp"

namespace cotk {

void TrainConfig::validate(int steps) const {
  if (batch_size < 1) throw DomainError("train: batch_size must be positive");
  if (epsilon <= 0) throw DomainError("train: epsilon must be positive");
  if (sinkhorn_iters < 1) throw DomainError("train: sinkhorn_iters must be positive");
  if (learning_rate <= 0) throw DomainError("train: learning_rate must be positive");
  if (!(lr_decay_rate > 0 && lr_decay_rate <= 1))
    throw DomainError("train: lr_decay_rate must be in (0, 1]");
  if (lr_decay_every < 1) throw DomainError("train: lr_decay_every must be positive");
  if (context_length < 1 || context_length > steps - 1)
    throw DomainError("train: context_length must be in [1, T-1]");
  if (total_steps < 0) throw DomainError("train: total_steps must be nonnegative");
  if (eta <= 0) throw DomainError("train: eta must be positive");
  if (samples_per_atom < 1) throw DomainError("train: samples_per_atom must be positive");
  if (lambda < 0) throw DomainError("train: lambda must be nonnegative");
  bandwidth.validate();
}

namespace {

DivergenceForm divergence_from_string(const std::string& s) {
  if (s == "doubled_cross") return DivergenceForm::kDoubledCross;
  if (s == "single_cross") return DivergenceForm::kSingleCross;
  throw ConfigError("divergence_mode must be doubled_cross or single_cross, got: " + s);
}

SmoothingMode smoothing_from_string(const std::string& s) {
  if (s == "additive") return SmoothingMode::kAdditive;
  if (s == "temporal_blur") return SmoothingMode::kTemporalBlur;
  if (s == "off") return SmoothingMode::kOff;
  throw ConfigError("smoothing_mode must be additive, temporal_blur or off, got: " + s);
}

KernelFamily kernel_from_string(const std::string& s) {
  if (s == "gaussian") return KernelFamily::kGaussian;
  if (s == "uniform_compact") return KernelFamily::kUniformCompact;
  throw ConfigError("kernel must be gaussian or uniform_compact, got: " + s);
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("optimizer must be sgd or adam, got: " + s);
}

}  // namespace

TrainConfig train_config_from_kv(const KvConfig& kv) {
  TrainConfig cfg;
  cfg.batch_size = static_cast<int>(kv.get_long("batch_size", cfg.batch_size));
  cfg.epsilon = kv.get_double("epsilon", cfg.epsilon);
  cfg.lambda = kv.get_double("lambda", cfg.lambda);
  cfg.sinkhorn_iters = static_cast<int>(kv.get_long("sinkhorn_iters", cfg.sinkhorn_iters));
  cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
  cfg.lr_decay_rate = kv.get_double("lr_decay_rate", cfg.lr_decay_rate);
  cfg.lr_decay_every = kv.get_long("lr_decay_every", cfg.lr_decay_every);
  cfg.bandwidth.h_init = kv.get_double("bandwidth_h_init", cfg.bandwidth.h_init);
  cfg.bandwidth.h_floor = kv.get_double("bandwidth_h_floor", cfg.bandwidth.h_floor);
  cfg.bandwidth.decay_rate = kv.get_double("bandwidth_decay_rate", cfg.bandwidth.decay_rate);
  cfg.bandwidth.decay_every = kv.get_long("bandwidth_decay_every", cfg.bandwidth.decay_every);
  cfg.context_length = static_cast<int>(kv.require_long("context_length"));
  cfg.total_steps = kv.require_long("total_steps");
  cfg.seed = static_cast<std::uint64_t>(kv.get_long("seed", static_cast<long>(cfg.seed)));
  cfg.eta = kv.get_double("eta", cfg.eta);
  cfg.divergence_mode = divergence_from_string(kv.get("divergence_mode", "doubled_cross"));
  cfg.smoothing_mode = smoothing_from_string(kv.get("smoothing_mode", "additive"));
  cfg.kernel = kernel_from_string(kv.get("kernel", "gaussian"));
  cfg.samples_per_atom =
      static_cast<int>(kv.get_long("samples_per_atom", cfg.samples_per_atom));
  cfg.kernel_truncation = kv.get_double("kernel_truncation", cfg.kernel_truncation);
  cfg.optimizer = optimizer_from_string(kv.get("optimizer", "sgd"));
  cfg.checkpoint_every = kv.get_long("checkpoint_every", cfg.checkpoint_every);
  cfg.hidden_size = static_cast<int>(kv.get_long("hidden_size", cfg.hidden_size));
  cfg.families = static_cast<int>(kv.get_long("families", cfg.families));
  cfg.noise_dim = static_cast<int>(kv.get_long("noise_dim", cfg.noise_dim));
  cfg.encoder_layers = static_cast<int>(kv.get_long("encoder_layers", cfg.encoder_layers));
  cfg.decoder_layers = static_cast<int>(kv.get_long("decoder_layers", cfg.decoder_layers));
  cfg.clamp = kv.get_double("clamp", cfg.clamp);
  cfg.noise_init_scale = kv.get_double("noise_init_scale", cfg.noise_init_scale);
  return cfg;
}

Grid<double> to_grid(const Path& p) {
  Grid<double> g(p.steps(), p.features());
  for (int t = 0; t < p.steps(); ++t)
    for (int f = 0; f < p.features(); ++f) g(t, f) = p.values()(t, f);
  return g;
}

ObjectiveDraws draw_objective_noise(const ObjectiveSettings& set, int m, int steps, int d,
                                    int noise_dim, std::mt19937_64& rng) {
  ObjectiveDraws draws;
  std::normal_distribution<double> normal(0.0, 1.0);
  const int horizon = steps - set.context_length;
  draws.noise.resize(m);
  for (int i = 0; i < m; ++i) {
    draws.noise[i] = Grid<double>(horizon, noise_dim);
    for (double& v : draws.noise[i].v) v = normal(rng);
  }
  if (set.smoothing_mode == SmoothingMode::kAdditive) {
    SmoothingSpec spec;
    spec.kernel = set.kernel;
    spec.bandwidth = set.bandwidth;
    spec.truncation = set.kernel_truncation;
    const int n_atoms = m * set.samples_per_atom;
    draws.mu_shift.resize(n_atoms);
    draws.nu_shift.resize(n_atoms);
    for (int a = 0; a < n_atoms; ++a) {
      const Matrix mu_noise = kernel_sample(spec, steps, d, rng);
      draws.mu_shift[a] = Grid<double>(steps, d);
      for (int t = 0; t < steps; ++t)
        for (int f = 0; f < d; ++f) draws.mu_shift[a](t, f) = mu_noise(t, f);
    }
    for (int a = 0; a < n_atoms; ++a) {
      const Matrix nu_noise = kernel_sample(spec, steps, d, rng);
      draws.nu_shift[a] = Grid<double>(steps, d);
      for (int t = 0; t < steps; ++t)
        for (int f = 0; f < d; ++f) draws.nu_shift[a](t, f) = nu_noise(t, f);
    }
  }
  return draws;
}

TrainState init_train_state(const TrainConfig& cfg, int steps, int features) {
  cfg.validate(steps);
  TrainState state;
  GeneratorConfig gcfg;
  gcfg.features = features;
  gcfg.hidden = cfg.hidden_size;
  gcfg.noise_dim = cfg.noise_dim;
  gcfg.encoder_layers = cfg.encoder_layers;
  gcfg.decoder_layers = cfg.decoder_layers;
  gcfg.noise_init_scale = cfg.noise_init_scale;
  state.gen = Generator::create(state.theta, "gen", gcfg);

  SummaryNetConfig scfg;
  scfg.features = features;
  scfg.hidden = cfg.hidden_size;
  scfg.outputs = cfg.families;
  scfg.clamp = cfg.clamp;
  state.h_net = SummaryNet::create(state.phi, "disc_h", scfg);
  state.m_net = SummaryNet::create(state.phi, "disc_m", scfg);

  state.rng.seed(cfg.seed);
  state.gen.init(state.theta, state.rng);
  state.h_net.init(state.phi, state.rng);
  state.m_net.init(state.phi, state.rng);

  state.adam_m_theta.assign(state.theta.size(), 0.0);
  state.adam_v_theta.assign(state.theta.size(), 0.0);
  state.adam_m_phi.assign(state.phi.size(), 0.0);
  state.adam_v_phi.assign(state.phi.size(), 0.0);
  return state;
}

namespace {

struct PassResult {
  double objective;
  double divergence;
  double penalty;
  std::vector<double> grad_theta;
  std::vector<double> grad_phi;
};

PassResult run_pass(TrainState& state, const std::vector<Grid<double>>& real,
                    const ObjectiveSettings& set, const ObjectiveDraws& draws) {
  static thread_local ad::Tape tape;
  tape.reset();
  const std::vector<ad::Value> theta = lift(tape, state.theta.data());
  const std::vector<ad::Value> phi = lift(tape, state.phi.data());
  auto leaf = [&tape](double v) { return tape.leaf(v); };
  const KccotParts<ad::Value> parts = kccot_objective_t<ad::Value>(
      state.gen, state.h_net, state.m_net, std::span<const ad::Value>(theta),
      std::span<const ad::Value>(phi), real, draws, set, leaf);
  tape.backward(parts.objective);

  PassResult out;
  out.objective = parts.objective.val();
  out.divergence = parts.divergence.val();
  out.penalty = parts.penalty.val();
  out.grad_theta.resize(theta.size());
  out.grad_phi.resize(phi.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out.grad_theta[i] = tape.grad(theta[i]);
  for (std::size_t i = 0; i < phi.size(); ++i) out.grad_phi[i] = tape.grad(phi[i]);
  for (double g : out.grad_theta)
    if (!std::isfinite(g)) throw NumericalError("non-finite generator gradient");
  for (double g : out.grad_phi)
    if (!std::isfinite(g)) throw NumericalError("non-finite discriminator gradient");
  return out;
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// direction +1 ascends, -1 descends.
void apply_update(std::vector<double>& params, const std::vector<double>& grad, double lr,
                  double direction, OptimizerKind optimizer, std::vector<double>& m,
                  std::vector<double>& v, long t) {
  if (optimizer == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += direction * lr * grad[i];
    return;
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = direction * grad[i];  // ascent folds into the gradient sign
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] += lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace

StepMetrics train_step(TrainState& state, const PathBatch& data_batch, const TrainConfig& cfg) {
  const int steps = data_batch.steps();
  const int d = data_batch.features();
  cfg.validate(steps);
  if (data_batch.size() != cfg.batch_size)
    throw DimensionError("train_step: batch size does not match config");

  const double h = bandwidth_at(cfg.bandwidth, state.step);
  const double lr =
      cfg.learning_rate *
      std::pow(cfg.lr_decay_rate, static_cast<double>(state.step) / cfg.lr_decay_every);

  ObjectiveSettings set;
  set.epsilon = cfg.epsilon;
  set.sinkhorn_iters = cfg.sinkhorn_iters;
  set.lambda = cfg.lambda;
  set.eta = cfg.eta;
  set.context_length = cfg.context_length;
  set.divergence_mode = cfg.divergence_mode;
  set.smoothing_mode = cfg.smoothing_mode;
  set.samples_per_atom = cfg.samples_per_atom;
  set.kernel = cfg.kernel;
  set.bandwidth = h;
  set.kernel_truncation = cfg.kernel_truncation;

  std::vector<Grid<double>> real;
  real.reserve(data_batch.size());
  for (int i = 0; i < data_batch.size(); ++i) real.push_back(to_grid(data_batch[i]));

  StepMetrics metrics;
  metrics.step = state.step;
  metrics.bandwidth = h;
  metrics.lr = lr;

  try {
    // Discriminator ascent on divergence - lambda * penalty.
    set.include_penalty = true;
    const ObjectiveDraws draws_phi =
        draw_objective_noise(set, cfg.batch_size, steps, d, cfg.noise_dim, state.rng);
    const PassResult phi_pass = run_pass(state, real, set, draws_phi);
    apply_update(state.phi.data(), phi_pass.grad_phi, lr, +1.0, cfg.optimizer,
                 state.adam_m_phi, state.adam_v_phi, state.step + 1);
    state.phi.check_finite("discriminator update");
    metrics.penalty = phi_pass.penalty;
    metrics.grad_norm_phi = l2_norm(phi_pass.grad_phi);

    // Generator descent on the divergence alone, fresh noise and
    // smoothing draws, same data batch.
    set.include_penalty = false;
    const ObjectiveDraws draws_theta =
        draw_objective_noise(set, cfg.batch_size, steps, d, cfg.noise_dim, state.rng);
    const PassResult theta_pass = run_pass(state, real, set, draws_theta);
    apply_update(state.theta.data(), theta_pass.grad_theta, lr, -1.0, cfg.optimizer,
                 state.adam_m_theta, state.adam_v_theta, state.step + 1);
    state.theta.check_finite("generator update");
    metrics.divergence = theta_pass.divergence;
    metrics.grad_norm_theta = l2_norm(theta_pass.grad_theta);
  } catch (const NumericalError& err) {
    throw NumericalError("step " + std::to_string(state.step) + ": " + err.what(), state.step);
  }

  ++state.step;
  return metrics;
}

void write_metrics_csv(const std::vector<StepMetrics>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "step,divergence,penalty,grad_norm_theta,grad_norm_phi,bandwidth,lr\n";
  for (const StepMetrics& row : history)
    out << row.step << ',' << format_double(row.divergence) << ','
        << format_double(row.penalty) << ',' << format_double(row.grad_norm_theta) << ','
        << format_double(row.grad_norm_phi) << ',' << format_double(row.bandwidth) << ','
        << format_double(row.lr) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  ParamVector merged;
  for (const ParamVector* src : {&state.theta, &state.phi})
    for (const ParamSlice& s : src->slices()) {
      const int off = merged.add(s.name, s.rows, s.cols);
      for (int i = 0; i < s.size(); ++i) merged.data()[off + i] = src->data()[s.offset + i];
    }
  save_params(merged, path);
}

namespace {

void append_manifest(const TrainSinks& sinks, long step, const std::string& file,
                     std::uint64_t seed) {
  if (sinks.manifest_path.empty()) return;
  std::ofstream out(sinks.manifest_path, std::ios::app);
  if (!out) throw IoError("cannot open manifest: " + sinks.manifest_path);
  nlohmann::ordered_json j;
  j["schema"] = "cotk-manifest/1";
  j["step"] = step;
  j["file"] = file;
  j["config_hash"] = sinks.config_hash;
  j["seed"] = seed;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["timestamp_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  out << j.dump() << "\n";
}

}  // namespace

TrainResult train(const PathBatch& dataset, const TrainConfig& cfg, const TrainSinks* sinks) {
  cfg.validate(dataset.steps());
  if (dataset.size() < cfg.batch_size)
    throw DomainError("train: dataset smaller than one batch");

  TrainResult result;
  result.state = init_train_state(cfg, dataset.steps(), dataset.features());
  TrainState& state = result.state;

  std::uniform_int_distribution<int> pick(0, dataset.size() - 1);
  auto checkpoint = [&](long step) {
    if (!sinks || sinks->checkpoint_dir.empty()) return;
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_%08ld.cotp", step);
    const std::string file =
        (std::filesystem::path(sinks->checkpoint_dir) / name).string();
    save_checkpoint(state, file);
    append_manifest(*sinks, step, file, cfg.seed);
  };

  for (long s = 0; s < cfg.total_steps; ++s) {
    std::vector<Path> batch;
    batch.reserve(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(dataset[pick(state.rng)]);
    result.history.push_back(train_step(state, PathBatch(std::move(batch)), cfg));
    if (cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0 &&
        s + 1 != cfg.total_steps)
      checkpoint(s + 1);
  }
  checkpoint(cfg.total_steps);

  if (sinks && !sinks->metrics_csv.empty()) write_metrics_csv(result.history, sinks->metrics_csv);
  return result;
}

}  // namespace cotk
