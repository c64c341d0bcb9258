#include "cotk/eval.hpp"

#include <cmath>
#include <random>

#include "cotk/core.hpp"
#include "cotk/sinkhorn.hpp"

namespace cotk {

EvalResult evaluate_rollouts(const RolloutFn& rollout, int noise_dim,
                             const DatasetSpec& heldout_spec, int k, const EvalConfig& cfg) {
  const PathBatch heldout = generate_dataset(heldout_spec);
  const int steps = heldout.steps();
  const int d = heldout.features();
  if (k < 1 || k > steps - 1) throw DomainError("eval: context length out of range");
  const int horizon = steps - k;
  const int n_ctx = std::min(cfg.n_contexts, heldout.size());

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  EvalResult out;
  std::vector<Matrix> first_rollout(n_ctx);
  std::vector<double> pred_sum(horizon, 0.0), pred_sumsq(horizon, 0.0);
  double se_sum = 0.0;
  long se_count = 0;

  for (int c = 0; c < n_ctx; ++c) {
    const Matrix context = heldout[c].values().topRows(k);
    Matrix mean_pred = Matrix::Zero(horizon, d);
    for (int r = 0; r < cfg.n_rollouts; ++r) {
      Matrix noise(horizon, noise_dim);
      for (int t = 0; t < horizon; ++t)
        for (int f = 0; f < noise_dim; ++f) noise(t, f) = normal(rng);
      const Matrix pred = rollout(context, noise, steps);
      if (pred.rows() != horizon || pred.cols() != d)
        throw DimensionError("eval: rollout returned wrong shape");
      mean_pred += pred;
      if (r == 0) first_rollout[c] = pred;
      for (int t = 0; t < horizon; ++t)
        for (int f = 0; f < d; ++f) {
          pred_sum[t] += pred(t, f);
          pred_sumsq[t] += pred(t, f) * pred(t, f);
        }
    }
    mean_pred /= cfg.n_rollouts;

    if (heldout_spec.kind == DatasetKind::kAr1) {
      // E[x_{k+j} | x_{1:k}] = a^j x_k, per feature
      for (int j = 1; j <= horizon; ++j) {
        const double decay = std::pow(heldout_spec.ar1_coeff, j);
        for (int f = 0; f < d; ++f) {
          const double err = mean_pred(j - 1, f) - decay * context(k - 1, f);
          se_sum += err * err;
          ++se_count;
        }
      }
    }
  }

  out.cond_mean_rmse = heldout_spec.kind == DatasetKind::kAr1
                           ? std::sqrt(se_sum / static_cast<double>(se_count))
                           : std::nan("");

  // Per-step marginal statistics, predictions vs held-out truth.
  for (int t = 0; t < horizon; ++t) {
    EvalStepStat stat;
    stat.t = k + t;
    const double n_pred = static_cast<double>(n_ctx) * cfg.n_rollouts * d;
    stat.pred_mean = pred_sum[t] / n_pred;
    stat.pred_var = std::max(0.0, pred_sumsq[t] / n_pred - stat.pred_mean * stat.pred_mean);
    double rs = 0.0, rss = 0.0;
    for (int i = 0; i < heldout.size(); ++i)
      for (int f = 0; f < d; ++f) {
        const double v = heldout[i].values()(k + t, f);
        rs += v;
        rss += v * v;
      }
    const double n_real = static_cast<double>(heldout.size()) * d;
    stat.real_mean = rs / n_real;
    stat.real_var = std::max(0.0, rss / n_real - stat.real_mean * stat.real_mean);
    out.per_step.push_back(stat);
  }

  // Divergence between real futures and sampled predictions.
  std::vector<Path> real_futures, pred_futures;
  for (int c = 0; c < n_ctx; ++c) {
    real_futures.emplace_back(Matrix(heldout[c].values().bottomRows(horizon)));
    pred_futures.emplace_back(first_rollout[c]);
  }
  const DiscretePathMeasure mu = DiscretePathMeasure::uniform(PathBatch(std::move(real_futures)));
  const DiscretePathMeasure nu = DiscretePathMeasure::uniform(PathBatch(std::move(pred_futures)));
  SinkhornConfig scfg;
  scfg.epsilon = cfg.epsilon;
  scfg.iterations = cfg.sinkhorn_iterations;
  out.divergence_heldout = sinkhorn_divergence(mu, nu, ground_cost, scfg);
  return out;
}

EvalResult evaluate_generator(const Generator& gen, const ParamVector& theta,
                              const DatasetSpec& heldout_spec, int k, const EvalConfig& cfg) {
  if (heldout_spec.features != gen.cfg.features)
    throw DimensionError("eval: feature width mismatch");
  std::span<const double> params(theta.data().data(), theta.data().size());
  const RolloutFn rollout = [&gen, params](const Matrix& context, const Matrix& noise,
                                           int total_steps) {
    return decode_autoregressive(gen, params, context, noise, total_steps);
  };
  return evaluate_rollouts(rollout, gen.cfg.noise_dim, heldout_spec, k, cfg);
}

}  // namespace cotk
