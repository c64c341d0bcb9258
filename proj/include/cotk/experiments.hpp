#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cotk/causal.hpp"
#include "cotk/smoothing.hpp"

namespace cotk {

// Smoothed-vs-raw estimator study on the degenerate two-step law: for
// each sample size and seed, the exact bicausal distance between two
// independent samples, raw and kernel-smoothed with h_m = scale * m^-beta.
struct ConvergenceSettings {
  std::vector<int> m_grid{4, 8, 16};
  int n_seeds = 20;
  double beta = 0.5;
  double scale = 1.0;
  KernelFamily kernel = KernelFamily::kGaussian;
  double truncation = 8.0;
  int samples_per_atom = 1;
  int grid_points = 0;  // 0: ten times the largest m
  std::uint64_t base_seed = 1000;
  int threads = 1;
};

struct ConvergenceRow {
  int m = 0;
  std::uint64_t seed = 0;
  bool smoothed = false;
  double aw = 0.0;
  SolverStatus status = SolverStatus::kNumericalFailure;
};

struct ModeSummary {
  int m = 0;
  bool smoothed = false;
  int count = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
};

std::vector<ConvergenceRow> convergence_experiment(const ConvergenceSettings& settings);
std::vector<ModeSummary> summarize_convergence(const std::vector<ConvergenceRow>& rows);

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, const std::string& path,
                           const std::string& config_hash);
void write_convergence_summary_csv(const std::vector<ModeSummary>& summaries,
                                   const std::string& path, const std::string& config_hash);

// Random tiny-instance study for the transport oracles: exact classical,
// causal and bicausal values per instance, with shared prefixes built by
// copying coordinates.
struct OracleRow {
  int instance_id = 0;
  double w = 0.0;
  double wk = 0.0;
  double aw = 0.0;
  SolverStatus status = SolverStatus::kNumericalFailure;
};

struct OracleInstance {
  DiscretePathMeasure mu;
  DiscretePathMeasure nu;
};

// Instances whose atoms branch off shared prefixes, so the causality
// constraints genuinely bind.
OracleInstance random_tree_instance(std::uint64_t seed, int max_atoms = 6, int max_steps = 3,
                                    int max_features = 2);

// Per-instance seed of the stream oracle_study walks; instance ids in
// its CSV refer to this stream.
std::uint64_t oracle_instance_seed(std::uint64_t seed, int instance_id);

std::vector<OracleRow> oracle_study(int instances, std::uint64_t seed);
void write_oracle_csv(const std::vector<OracleRow>& rows, const std::string& path);

}  // namespace cotk
