#include "cotk/sinkhorn.hpp"

#include <cmath>

namespace cotk {

double shannon_entropy(const TransportPlan& plan) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < plan.table.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.table.cols(); ++j) {
      const double p = plan.table(i, j);
      if (p < 0) throw DomainError("shannon_entropy: negative plan entry");
      if (p > 0) h -= p * std::log(p);
    }
  return h;
}

namespace {

Grid<double> to_grid(const Matrix& m) {
  Grid<double> g(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) g(i, j) = m(i, j);
  return g;
}

void check_inputs(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                  const CostMatrix& cost) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size())
    throw DimensionError("sinkhorn: cost matrix shape must match atom counts");
  if (!cost.entries.allFinite()) throw DomainError("sinkhorn: cost matrix has non-finite entries");
  if ((mu.weights().array() <= 0).any() || (nu.weights().array() <= 0).any())
    throw DomainError("sinkhorn: weights must be strictly positive (drop zero-weight atoms)");
}

double cross_cost(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                  const CostFn& cost_fn, const SinkhornConfig& cfg) {
  Matrix c(mu.size(), nu.size());
  for (int i = 0; i < mu.size(); ++i)
    for (int j = 0; j < nu.size(); ++j) c(i, j) = cost_fn(mu.atoms()[i], nu.atoms()[j]);
  CostMatrix cm{std::move(c), "callable"};
  check_inputs(mu, nu, cm);
  const Grid<double> grid = to_grid(cm.entries);
  std::span<const double> a(mu.weights().data(), static_cast<std::size_t>(mu.size()));
  std::span<const double> b(nu.weights().data(), static_cast<std::size_t>(nu.size()));
  return sinkhorn_core<double>(a, b, grid, cfg).cost;
}

}  // namespace

SinkhornSolution sinkhorn_solve(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                                const CostMatrix& cost, const SinkhornConfig& cfg) {
  check_inputs(mu, nu, cost);
  const Grid<double> grid = to_grid(cost.entries);
  std::span<const double> a(mu.weights().data(), static_cast<std::size_t>(mu.size()));
  std::span<const double> b(nu.weights().data(), static_cast<std::size_t>(nu.size()));

  SinkhornSolution sol;
  std::vector<SinkhornTraceRow>* trace = cfg.record_trace ? &sol.trace : nullptr;
  SinkhornCore<double> core = sinkhorn_core<double>(a, b, grid, cfg, nullptr, trace);

  const int m = mu.size(), n = nu.size();
  sol.potentials_f = Eigen::Map<const Vector>(core.f.data(), m);
  sol.potentials_g = Eigen::Map<const Vector>(core.g.data(), n);
  sol.plan.table = Matrix(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) sol.plan.table(i, j) = core.plan(i, j);
  sol.plan.marginal_mu = mu.weights();
  sol.plan.marginal_nu = nu.weights();
  sol.transport_cost = core.cost;
  sol.iterations_run = core.iterations_run;
  return sol;
}

double sinkhorn_divergence(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                           const CostFn& cost_fn, const SinkhornConfig& cfg,
                           DivergenceForm form) {
  if (&mu == &nu) return 0.0;  // cancels term by term
  const double cross = cross_cost(mu, nu, cost_fn, cfg);
  const double self_mu = cross_cost(mu, mu, cost_fn, cfg);
  const double self_nu = cross_cost(nu, nu, cost_fn, cfg);
  const double w = form == DivergenceForm::kDoubledCross ? 2.0 : 1.0;
  return w * cross - self_mu - self_nu;
}

double mixed_sinkhorn_divergence(const DiscretePathMeasure& mu, const DiscretePathMeasure& mu2,
                                 const DiscretePathMeasure& nu, const DiscretePathMeasure& nu2,
                                 const CostFn& cost_fn, const SinkhornConfig& cfg) {
  return cross_cost(mu, nu, cost_fn, cfg) + cross_cost(mu2, nu2, cost_fn, cfg) -
         cross_cost(mu, mu2, cost_fn, cfg) - cross_cost(nu, nu2, cost_fn, cfg);
}

double sinkhorn_divergence_w6(const DiscretePathMeasure& mu, const DiscretePathMeasure& mu2,
                              const DiscretePathMeasure& nu, const DiscretePathMeasure& nu2,
                              const CostFn& cost_fn, const SinkhornConfig& cfg) {
  return cross_cost(mu, nu, cost_fn, cfg) + cross_cost(mu2, nu, cost_fn, cfg) +
         cross_cost(mu, nu2, cost_fn, cfg) + cross_cost(mu2, nu2, cost_fn, cfg) -
         2.0 * cross_cost(mu, mu2, cost_fn, cfg) - 2.0 * cross_cost(nu, nu2, cost_fn, cfg);
}

}  // namespace cotk
