#pragma once

#include <cstdint>
#include <vector>

#include "cotk/datasets.hpp"
#include "cotk/nets.hpp"

namespace cotk {

struct EvalConfig {
  int n_contexts = 64;
  int n_rollouts = 256;
  double epsilon = 0.8;
  int sinkhorn_iterations = 100;
  std::uint64_t seed = 7;
};

struct EvalStepStat {
  int t;  // absolute time step of the prediction
  double pred_mean, pred_var;
  double real_mean, real_var;
};

struct EvalResult {
  // RMSE between the rollout-mean prediction and the analytic conditional
  // mean; NaN for dataset laws without a closed-form conditional mean.
  double cond_mean_rmse = 0.0;
  // Debiased divergence between held-out real futures and one sampled
  // prediction per context.
  double divergence_heldout = 0.0;
  std::vector<EvalStepStat> per_step;
};

// Produces the continuation for one context given per-step noise.
using RolloutFn =
    std::function<Matrix(const Matrix& context, const Matrix& noise, int total_steps)>;

// Draws a held-out dataset from `heldout_spec`, rolls `rollout` from each
// context and scores the rollouts.
EvalResult evaluate_rollouts(const RolloutFn& rollout, int noise_dim,
                             const DatasetSpec& heldout_spec, int k, const EvalConfig& cfg);

// Same, autoregressively rolling the generator.
EvalResult evaluate_generator(const Generator& gen, const ParamVector& theta,
                              const DatasetSpec& heldout_spec, int k, const EvalConfig& cfg);

}  // namespace cotk
