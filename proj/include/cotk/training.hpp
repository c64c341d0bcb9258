#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cotk/causal.hpp"
#include "cotk/config.hpp"
#include "cotk/core.hpp"
#include "cotk/nets.hpp"
#include "cotk/sinkhorn.hpp"
#include "cotk/smoothing.hpp"

namespace cotk {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  int batch_size = 8;
  double epsilon = 0.8;
  double lambda = 1.0;
  int sinkhorn_iters = 100;
  double learning_rate = 0.0005;
  double lr_decay_rate = 0.985;
  long lr_decay_every = 10000;
  BandwidthSchedule bandwidth;
  int context_length = 5;  // k
  long total_steps = 20000;
  std::uint64_t seed = 1;
  double eta = 1e-6;
  DivergenceForm divergence_mode = DivergenceForm::kDoubledCross;
  SmoothingMode smoothing_mode = SmoothingMode::kAdditive;
  KernelFamily kernel = KernelFamily::kGaussian;
  int samples_per_atom = 1;
  double kernel_truncation = 8.0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  long checkpoint_every = 5000;
  // architecture
  int hidden_size = 32;
  int families = 4;  // J
  int noise_dim = 4;
  int encoder_layers = 1;
  int decoder_layers = 2;
  double clamp = 10.0;
  double noise_init_scale = 1.0;

  void validate(int steps) const;
};

// Reads training keys out of a flat key=value config.
TrainConfig train_config_from_kv(const KvConfig& kv);

struct StepMetrics {
  long step = 0;
  double divergence = 0.0;
  double penalty = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_phi = 0.0;
  double bandwidth = 0.0;
  double lr = 0.0;
};

struct TrainState {
  ParamVector theta;  // generator
  ParamVector phi;    // discriminator: h network then M network
  Generator gen;
  SummaryNet h_net;
  SummaryNet m_net;
  std::vector<double> adam_m_theta, adam_v_theta, adam_m_phi, adam_v_phi;
  long step = 0;
  std::mt19937_64 rng;
};

TrainState init_train_state(const TrainConfig& cfg, int steps, int features);

// One alternating update: ascent on the discriminator over
// divergence - lambda * penalty, then, after fresh noise and smoothing
// draws on the same data batch, descent on the generator over the
// divergence alone.
StepMetrics train_step(TrainState& state, const PathBatch& data_batch, const TrainConfig& cfg);

struct TrainSinks {
  std::string metrics_csv;      // empty: skip
  std::string checkpoint_dir;   // empty: skip
  std::string manifest_path;    // JSON lines, one per checkpoint
  std::string config_hash;
};

struct TrainResult {
  TrainState state;
  std::vector<StepMetrics> history;
};

TrainResult train(const PathBatch& dataset, const TrainConfig& cfg,
                  const TrainSinks* sinks = nullptr);

void write_metrics_csv(const std::vector<StepMetrics>& history, const std::string& path);

// Combined generator+discriminator checkpoint.
void save_checkpoint(const TrainState& state, const std::string& path);

// ---------------------------------------------------------------------------
// Scalar-generic objective. All stochastic draws are made by the caller
// so the plain-double and tape instantiations see identical inputs.

struct ObjectiveSettings {
  double epsilon = 0.8;
  int sinkhorn_iters = 100;
  double lambda = 1.0;
  double eta = 1e-6;
  int context_length = 5;
  DivergenceForm divergence_mode = DivergenceForm::kDoubledCross;
  SmoothingMode smoothing_mode = SmoothingMode::kAdditive;
  int samples_per_atom = 1;
  KernelFamily kernel = KernelFamily::kGaussian;
  double bandwidth = 1.0;
  double kernel_truncation = 8.0;
  bool include_penalty = true;
};

struct ObjectiveDraws {
  std::vector<Grid<double>> noise;      // per data path: (T-k) x noise_dim
  std::vector<Grid<double>> mu_shift;   // additive mode: per smoothed atom, T x d
  std::vector<Grid<double>> nu_shift;
};

ObjectiveDraws draw_objective_noise(const ObjectiveSettings& set, int m, int steps, int d,
                                    int noise_dim, std::mt19937_64& rng);

Grid<double> to_grid(const Path& p);

template <class S>
struct KccotParts {
  S objective;
  S divergence;
  S penalty;
};

namespace detail {

template <class S, class Lift>
Grid<S> lift_grid(const Grid<double>& g, Lift&& lift) {
  Grid<S> out(g.rows, g.cols);
  for (std::size_t i = 0; i < g.v.size(); ++i) out.v[i] = lift(g.v[i]);
  return out;
}

// Per-position renormalized separable blur; linear in the entries, so it
// differentiates through unchanged.
template <class S>
Grid<S> blur_grid(const Grid<S>& g, const std::vector<double>& time_taps,
                  const std::vector<double>& feat_taps) {
  const int tr = static_cast<int>(time_taps.size() / 2);
  Grid<S> mid(g.rows, g.cols);
  for (int t = 0; t < g.rows; ++t) {
    double norm = 0.0;
    for (int o = -tr; o <= tr; ++o)
      if (t + o >= 0 && t + o < g.rows) norm += time_taps[o + tr];
    for (int f = 0; f < g.cols; ++f) {
      bool first = true;
      S acc{};
      for (int o = -tr; o <= tr; ++o) {
        const int q = t + o;
        if (q < 0 || q >= g.rows) continue;
        const S term = g(q, f) * (time_taps[o + tr] / norm);
        acc = first ? term : acc + term;
        first = false;
      }
      mid(t, f) = acc;
    }
  }
  if (g.cols <= 1) return mid;
  const int fr = static_cast<int>(feat_taps.size() / 2);
  Grid<S> out(g.rows, g.cols);
  for (int f = 0; f < g.cols; ++f) {
    double norm = 0.0;
    for (int o = -fr; o <= fr; ++o)
      if (f + o >= 0 && f + o < g.cols) norm += feat_taps[o + fr];
    for (int t = 0; t < g.rows; ++t) {
      bool first = true;
      S acc{};
      for (int o = -fr; o <= fr; ++o) {
        const int q = f + o;
        if (q < 0 || q >= g.cols) continue;
        const S term = mid(t, q) * (feat_taps[o + fr] / norm);
        acc = first ? term : acc + term;
        first = false;
      }
      out(t, f) = acc;
    }
  }
  return out;
}

template <class S>
S ground_cost_t(const Grid<S>& x, const Grid<S>& y, std::vector<S>& scratch) {
  using scalar::dot;
  scratch.clear();
  for (std::size_t i = 0; i < x.v.size(); ++i) scratch.push_back(x.v[i] - y.v[i]);
  std::span<const S> diff(scratch.data(), scratch.size());
  return dot(diff, diff);
}

}  // namespace detail

// Builds the full adversarial objective once. Instantiate with
// S = ad::Value on a tape for gradients, or S = double (Lift = identity)
// for the finite-difference oracle.
template <class S, class Lift>
KccotParts<S> kccot_objective_t(const Generator& gen, const SummaryNet& h_net,
                                const SummaryNet& m_net, std::span<const S> theta,
                                std::span<const S> phi,
                                const std::vector<Grid<double>>& real,
                                const ObjectiveDraws& draws, const ObjectiveSettings& set,
                                Lift&& lift) {
  using scalar::abs;
  using scalar::dot;
  using scalar::sqr;
  using scalar::sqrt;
  using scalar::sum;

  const int m = static_cast<int>(real.size());
  const int steps = real.front().rows;
  const int d = real.front().cols;
  const int k = set.context_length;
  const int spa = set.smoothing_mode == SmoothingMode::kAdditive ? set.samples_per_atom : 1;
  const int n_mu = m * spa;

  // Generator forward on the raw batch (teacher forced).
  std::vector<Grid<S>> preds(m);
  for (int i = 0; i < m; ++i) {
    const Grid<S> x = detail::lift_grid<S>(real[i], lift);
    const std::vector<Grid<S>> feats = encode(gen, theta, x);
    const Grid<S> z = detail::lift_grid<S>(draws.noise[i], lift);
    preds[i] = decode_teacher_forced(gen, theta, feats, x, z, k);
  }

  // Smoothed measure atoms.
  std::vector<Grid<S>> mu_atoms(n_mu), nu_atoms(n_mu);
  std::vector<double> taps_t, taps_f;
  if (set.smoothing_mode == SmoothingMode::kTemporalBlur) {
    taps_t = blur_taps(set.kernel, set.bandwidth, set.kernel_truncation, steps);
    taps_f = blur_taps(set.kernel, set.bandwidth, set.kernel_truncation, d);
  }
  for (int i = 0; i < m; ++i) {
    for (int r = 0; r < spa; ++r) {
      const int a = i * spa + r;
      if (set.smoothing_mode == SmoothingMode::kAdditive) {
        Grid<double> shifted = real[i];
        for (std::size_t e = 0; e < shifted.v.size(); ++e)
          shifted.v[e] += draws.mu_shift[a].v[e];
        mu_atoms[a] = detail::lift_grid<S>(shifted, lift);
        Grid<S> concat(steps, d);
        const Grid<double>& nus = draws.nu_shift[a];
        for (int t = 0; t < k; ++t)
          for (int f = 0; f < d; ++f) concat(t, f) = lift(real[i](t, f) + nus(t, f));
        for (int t = k; t < steps; ++t)
          for (int f = 0; f < d; ++f) concat(t, f) = preds[i](t - k, f) + nus(t, f);
        nu_atoms[a] = std::move(concat);
      } else {
        Grid<S> concat(steps, d);
        for (int t = 0; t < k; ++t)
          for (int f = 0; f < d; ++f) concat(t, f) = lift(real[i](t, f));
        for (int t = k; t < steps; ++t)
          for (int f = 0; f < d; ++f) concat(t, f) = preds[i](t - k, f);
        if (set.smoothing_mode == SmoothingMode::kTemporalBlur) {
          mu_atoms[a] = detail::blur_grid(detail::lift_grid<S>(real[i], lift), taps_t, taps_f);
          nu_atoms[a] = detail::blur_grid(concat, taps_t, taps_f);
        } else {
          mu_atoms[a] = detail::lift_grid<S>(real[i], lift);
          nu_atoms[a] = std::move(concat);
        }
      }
    }
  }

  // Discriminator tables: h values (flattened J x (T-1)) and martingale
  // increments per atom, for both sides.
  const int table_len = h_net.cfg.outputs * (steps - 1);
  auto tables = [&](const std::vector<Grid<S>>& atoms, std::vector<std::vector<S>>& h_flat,
                    std::vector<std::vector<S>>& dm_flat, std::vector<Grid<S>>* m_raw) {
    h_flat.resize(atoms.size());
    dm_flat.resize(atoms.size());
    if (m_raw) m_raw->resize(atoms.size());
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      const Grid<S> h_tab = summary_forward(h_net, phi, atoms[a]);
      const Grid<S> m_tab = summary_forward(m_net, phi, atoms[a]);
      h_flat[a].reserve(table_len);
      dm_flat[a].reserve(table_len);
      for (int j = 0; j < h_net.cfg.outputs; ++j)
        for (int t = 0; t < steps - 1; ++t) {
          h_flat[a].push_back(h_tab(j, t));
          dm_flat[a].push_back(m_tab(j, t + 1) - m_tab(j, t));
        }
      if (m_raw) (*m_raw)[a] = m_tab;
    }
  };
  std::vector<std::vector<S>> h_mu, dm_mu, h_nu, dm_nu;
  std::vector<Grid<S>> m_raw_mu;
  tables(mu_atoms, h_mu, dm_mu, &m_raw_mu);
  tables(nu_atoms, h_nu, dm_nu, nullptr);

  // Cost c(x,y) + sum_jt h_t(y) dM_t(x) over atom pairs.
  std::vector<S> scratch;
  auto cost_grid = [&](const std::vector<Grid<S>>& ax, const std::vector<std::vector<S>>& dmx,
                       const std::vector<Grid<S>>& ay, const std::vector<std::vector<S>>& hy) {
    Grid<S> c(static_cast<int>(ax.size()), static_cast<int>(ay.size()));
    for (std::size_t i = 0; i < ax.size(); ++i)
      for (std::size_t l = 0; l < ay.size(); ++l)
        c(static_cast<int>(i), static_cast<int>(l)) =
            detail::ground_cost_t(ax[i], ay[l], scratch) +
            dot(std::span<const S>(hy[l]), std::span<const S>(dmx[i]));
    return c;
  };

  const std::vector<double> wa(n_mu, 1.0 / n_mu);
  std::span<const double> w(wa.data(), wa.size());
  SinkhornConfig scfg;
  scfg.epsilon = set.epsilon;
  scfg.iterations = set.sinkhorn_iters;

  ad::Tape* tape = nullptr;
  if constexpr (std::is_same_v<S, ad::Value>) tape = theta[0].tape();

  const S cross = sinkhorn_core<S>(w, w, cost_grid(mu_atoms, dm_mu, nu_atoms, h_nu), scfg,
                                   tape).cost;
  const S self_mu = sinkhorn_core<S>(w, w, cost_grid(mu_atoms, dm_mu, mu_atoms, h_mu), scfg,
                                     tape).cost;
  const S self_nu = sinkhorn_core<S>(w, w, cost_grid(nu_atoms, dm_nu, nu_atoms, h_nu), scfg,
                                     tape).cost;
  const double cross_weight = set.divergence_mode == DivergenceForm::kDoubledCross ? 2.0 : 1.0;
  const S divergence = cross * cross_weight - self_mu - self_nu;

  KccotParts<S> parts{divergence, divergence, lift(0.0)};
  if (set.include_penalty) {
    const int families = m_net.cfg.outputs;
    std::vector<S> terms;
    S penalty = lift(0.0);
    for (int j = 0; j < families; ++j) {
      // mean and variance of M^j pooled over time and batch
      terms.clear();
      for (int a = 0; a < n_mu; ++a)
        for (int t = 0; t < steps; ++t)
          terms.push_back(m_raw_mu[a](j, t) * (wa[a] / steps));
      const S mean = sum(std::span<const S>(terms));
      terms.clear();
      for (int a = 0; a < n_mu; ++a)
        for (int t = 0; t < steps; ++t)
          terms.push_back(sqr(m_raw_mu[a](j, t) - mean) * (wa[a] / steps));
      const S denom = sqrt(sum(std::span<const S>(terms))) + set.eta;
      for (int t = 0; t < steps - 1; ++t) {
        terms.clear();
        for (int a = 0; a < n_mu; ++a)
          terms.push_back(dm_mu[a][static_cast<std::size_t>(j) * (steps - 1) + t] *
                          (n_mu * wa[a]));
        penalty = penalty + abs(sum(std::span<const S>(terms))) / denom;
      }
    }
    parts.penalty = penalty * (1.0 / (static_cast<double>(n_mu) * steps));
    parts.objective = divergence - parts.penalty * set.lambda;
  }
  return parts;
}

}  // namespace cotk
