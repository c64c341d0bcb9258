#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cotk/sinkhorn.hpp"
#include "cotk/types.hpp"

namespace cotk {

// Function of a path prefix; the evaluation API hands it only the first
// rows, so it cannot peek at later time steps.
using PrefixFn = std::function<double(const Eigen::Ref<const Matrix>&)>;

// J families of per-time test functions (h on y-prefixes, M on
// x-prefixes). A plan is causal iff E[ sum_t h_t(y) (M_{t+1}-M_t)(x) ]
// vanishes for every such pair with M a martingale under the x-marginal.
struct CausalTestFunctions {
  int families = 0;                         // J
  std::vector<std::vector<PrefixFn>> h;     // h[j][t], t in [0, T-2], reads y_{0..t}
  std::vector<std::vector<PrefixFn>> m;     // m[j][t], t in [0, T-1], reads x_{0..t}
  double clamp = 10.0;

  int horizon() const { return m.empty() ? 0 : static_cast<int>(m.front().size()); }
  double eval_h(int j, int t, const Path& y) const;
  double eval_m(int j, int t, const Path& x) const;
};

// M^j_{t+1}(x_{0..t+1}) - M^j_t(x_{0..t}); t indexes the increment into
// step t+1 and runs over [0, T-2].
double delta_m(const CausalTestFunctions& tf, const Path& x, int j, int t);

// Parameterized cost c(x,y) + sum_j sum_t h^j_t(y) (M^j_{t+1}-M^j_t)(x).
// Reduces to ground_cost when every h is identically zero.
double causal_cost(const Path& x, const Path& y, const CausalTestFunctions& tf);

// Batch statistic penalizing deviation of M from the martingale property
// under mu: (1/(mT)) sum_j sum_t |sum_i m w_i dM^j_t(x^i)| / (sqrt(Var[M^j]) + eta),
// with Var pooled over time and batch.
double martingale_penalty(const DiscretePathMeasure& mu, const CausalTestFunctions& tf,
                          double eta);

// |E^plan[ sum_j sum_t h^j_t(y) dM^j_t(x) ]| for the given atom sets.
double causality_residual(const TransportPlan& plan, const PathBatch& atoms_x,
                          const PathBatch& atoms_y, const CausalTestFunctions& tf);

enum class SolverStatus { kOptimal, kInfeasible, kNumericalFailure };

struct ExactOTResult {
  double value = 0.0;
  TransportPlan plan;
  int constraint_count = 0;
  SolverStatus solver_status = SolverStatus::kNumericalFailure;
};

// Exact Kantorovich transport by LP. Oracle scale: at most 64 atoms a side.
ExactOTResult exact_ot_lp(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                          const CostMatrix& cost);

// Transport restricted to causal plans. The causality constraints are
// linearized over prefix classes: for every t, y-prefix class b and
// x-atom xb,  pi(Y in b, X = xb) mu(class(xb,t)) = pi(Y in b, X in class(xb,t)) mu(xb).
// Oracle scale: at most 16 atoms a side, T <= 4.
ExactOTResult exact_causal_ot(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                              const CostMatrix& cost);

// Transport over plans causal in both directions (nested distance).
ExactOTResult adapted_wasserstein(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                                  const CostMatrix& cost);

// Atoms sharing the first `steps` rows bitwise get the same class id;
// ids are assigned in first-appearance order.
std::vector<int> prefix_classes(const PathBatch& batch, int steps);

// Random admissible (h, M) pair for residual checks: h built from
// clamped affine functions of prefix summaries, M a mu-martingale by
// construction (cumulative conditionally centered increments, valid on
// the support of mu).
CausalTestFunctions sample_admissible_test_functions(const DiscretePathMeasure& mu,
                                                     int families, std::uint64_t seed);

}  // namespace cotk
