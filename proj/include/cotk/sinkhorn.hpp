#pragma once

#include <functional>
#include <span>
#include <type_traits>
#include <vector>

#include "cotk/ad.hpp"
#include "cotk/types.hpp"

namespace cotk {

// Joint probability table over two atom sets.
struct TransportPlan {
  Matrix table;  // rows follow mu atoms, columns nu atoms
  Vector marginal_mu;
  Vector marginal_nu;
  bool causal = false;
  bool bicausal = false;
};

struct SinkhornConfig {
  double epsilon = 0.8;
  int iterations = 100;
  double underflow_guard = 1e6;  // abort when a potential exceeds this magnitude
  bool record_trace = false;
  double convergence_threshold = 0.0;  // >0: stop once row-marginal L1 error drops below
};

struct SinkhornTraceRow {
  int iter;
  double objective;  // entropic objective <plan,C> - eps*H(plan)
  double marginal_err;
};

struct SinkhornSolution {
  Vector potentials_f;  // log-domain duals; plan = diag(e^{f/eps}) K diag(e^{g/eps})
  Vector potentials_g;
  TransportPlan plan;
  double transport_cost;  // <plan, C>
  int iterations_run;
  std::vector<SinkhornTraceRow> trace;
};

// -sum p log p with 0 log 0 = 0. Entries must be nonnegative.
double shannon_entropy(const TransportPlan& plan);

// Log-domain Sinkhorn with a fixed iteration budget. Weights must be
// strictly positive; drop zero-weight atoms before calling.
SinkhornSolution sinkhorn_solve(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                                const CostMatrix& cost, const SinkhornConfig& cfg);

using CostFn = std::function<double(const Path&, const Path&)>;

enum class DivergenceForm {
  kDoubledCross,  // 2 W(mu,nu) - W(mu,mu) - W(nu,nu)
  kSingleCross,   //   W(mu,nu) - W(mu,mu) - W(nu,nu)
};

// Debiased divergence. Returns exactly 0 when mu and nu are the same
// object (the combination cancels symbolically).
double sinkhorn_divergence(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                           const CostFn& cost_fn, const SinkhornConfig& cfg,
                           DivergenceForm form = DivergenceForm::kDoubledCross);

// Four-term form over two independent mini-batches per side:
// W(mu,nu) + W(mu2,nu2) - W(mu,mu2) - W(nu,nu2).
double mixed_sinkhorn_divergence(const DiscretePathMeasure& mu, const DiscretePathMeasure& mu2,
                                 const DiscretePathMeasure& nu, const DiscretePathMeasure& nu2,
                                 const CostFn& cost_fn, const SinkhornConfig& cfg);

// Six-term form: all four cross terms minus twice each within-side term.
double sinkhorn_divergence_w6(const DiscretePathMeasure& mu, const DiscretePathMeasure& mu2,
                              const DiscretePathMeasure& nu, const DiscretePathMeasure& nu2,
                              const CostFn& cost_fn, const SinkhornConfig& cfg);

// ---------------------------------------------------------------------------
// Scalar-generic core. Instantiated with double for plain solves and with
// ad::Value to differentiate through the unrolled iterations.

template <class S>
struct Grid {
  std::vector<S> v;
  int rows = 0, cols = 0;

  Grid() = default;
  Grid(int r, int c) : v(static_cast<std::size_t>(r) * c), rows(r), cols(c) {}

  S& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const S& operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const S> row(int r) const { return {v.data() + static_cast<std::size_t>(r) * cols,
                                                static_cast<std::size_t>(cols)}; }
};

inline double value_of(double x) { return x; }
inline double value_of(ad::Value x) { return x.val(); }

template <class S>
struct SinkhornCore {
  std::vector<S> f, g;  // duals, same convention as SinkhornSolution
  Grid<S> plan;
  S cost;
  int iterations_run = 0;
};

// One full iteration updates f from g, then g from f, so the column
// marginals of the returned plan are exact and the row marginals carry
// the residual error.
template <class S>
SinkhornCore<S> sinkhorn_core(std::span<const double> a, std::span<const double> b,
                              const Grid<S>& cost, const SinkhornConfig& cfg,
                              [[maybe_unused]] ad::Tape* tape = nullptr,
                              std::vector<SinkhornTraceRow>* trace = nullptr) {
  using scalar::logsumexp;
  constexpr bool kIsTape = std::is_same_v<S, ad::Value>;
  const int m = cost.rows, n = cost.cols;
  const double eps = cfg.epsilon;
  if (eps <= 0) throw DomainError("sinkhorn: epsilon must be positive");
  if (cfg.iterations < 1) throw DomainError("sinkhorn: need at least one iteration");

  auto lift = [&](double x) -> S {
    if constexpr (kIsTape)
      return tape->leaf(x);
    else
      return x;
  };

  // Gibbs kernel exponents -C/eps, built once.
  Grid<S> kexp(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) kexp(i, j) = cost(i, j) * (-1.0 / eps);

  std::vector<S> f(m), g(n);
  for (int i = 0; i < m; ++i) f[i] = lift(0.0);
  for (int j = 0; j < n; ++j) g[j] = lift(0.0);

  std::vector<S> arg(std::max(m, n));
  std::vector<S> scaled(std::max(m, n));
  int iters_done = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int j = 0; j < n; ++j) scaled[j] = g[j] * (1.0 / eps);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) arg[j] = scaled[j] + kexp(i, j);
      f[i] = logsumexp(std::span<const S>(arg.data(), n)) * (-eps) + eps * std::log(a[i]);
      if (std::abs(value_of(f[i])) > cfg.underflow_guard)
        throw NumericalError("sinkhorn: potential exceeded guard", it);
    }
    for (int i = 0; i < m; ++i) scaled[i] = f[i] * (1.0 / eps);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) arg[i] = scaled[i] + kexp(i, j);
      g[j] = logsumexp(std::span<const S>(arg.data(), m)) * (-eps) + eps * std::log(b[j]);
      if (std::abs(value_of(g[j])) > cfg.underflow_guard)
        throw NumericalError("sinkhorn: potential exceeded guard", it);
    }
    iters_done = it + 1;

    if constexpr (!kIsTape) {
      if (trace || cfg.convergence_threshold > 0) {
        double obj = 0.0, row_err = 0.0;
        for (int i = 0; i < m; ++i) {
          double row_sum = 0.0;
          for (int j = 0; j < n; ++j) {
            const double p = std::exp((f[i] + g[j]) / eps + kexp(i, j));
            row_sum += p;
            obj += p * cost(i, j);
            if (p > 0) obj += eps * p * std::log(p);
          }
          row_err += std::abs(row_sum - a[i]);
        }
        // obj accumulated <P,C> - eps*H via p log p
        if (trace) trace->push_back({it, obj, row_err});
        if (cfg.convergence_threshold > 0 && row_err < cfg.convergence_threshold) break;
      }
    }
  }

  SinkhornCore<S> out;
  out.iterations_run = iters_done;
  out.f = std::move(f);
  out.g = std::move(g);
  out.plan = Grid<S>(m, n);
  using scalar::exp;
  for (int i = 0; i < m; ++i) {
    const S fs = out.f[i] * (1.0 / eps);
    for (int j = 0; j < n; ++j)
      out.plan(i, j) = exp(fs + out.g[j] * (1.0 / eps) + kexp(i, j));
  }
  using scalar::dot;
  out.cost = dot(std::span<const S>(out.plan.v), std::span<const S>(cost.v));
  return out;
}

}  // namespace cotk
