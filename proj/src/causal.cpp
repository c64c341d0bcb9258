#include "cotk/causal.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "cotk/core.hpp"
#include "cotk/simplex.hpp"

namespace cotk {

namespace {

double clamp_to(double v, double bound) { return std::min(bound, std::max(-bound, v)); }

bool same_prefix(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  return a.rows() == b.rows() && (a.array() == b.array()).all();
}

}  // namespace

double CausalTestFunctions::eval_h(int j, int t, const Path& y) const {
  return clamp_to(h[j][t](y.prefix(t + 1)), clamp);
}

double CausalTestFunctions::eval_m(int j, int t, const Path& x) const {
  return clamp_to(m[j][t](x.prefix(t + 1)), clamp);
}

double delta_m(const CausalTestFunctions& tf, const Path& x, int j, int t) {
  if (t < 0 || t > x.steps() - 2) throw DomainError("delta_m: increment index out of range");
  return tf.eval_m(j, t + 1, x) - tf.eval_m(j, t, x);
}

double causal_cost(const Path& x, const Path& y, const CausalTestFunctions& tf) {
  if (x.steps() != y.steps() || x.features() != y.features())
    throw DimensionError("causal_cost: paths must share (T, d)");
  double correction = 0.0;
  for (int j = 0; j < tf.families; ++j)
    for (int t = 0; t <= x.steps() - 2; ++t)
      correction += tf.eval_h(j, t, y) * delta_m(tf, x, j, t);
  return ground_cost(x, y) + correction;
}

double martingale_penalty(const DiscretePathMeasure& mu, const CausalTestFunctions& tf,
                          double eta) {
  if (eta <= 0) throw DomainError("martingale_penalty: eta must be positive");
  const int m = mu.size();
  const int steps = mu.steps();
  double penalty = 0.0;
  for (int j = 0; j < tf.families; ++j) {
    // variance of M^j pooled over time and batch, weighted by the measure
    double mean = 0.0, mean_sq = 0.0;
    for (int i = 0; i < m; ++i) {
      const double wi = mu.weights()[i] / steps;
      for (int t = 0; t < steps; ++t) {
        const double v = tf.eval_m(j, t, mu.atoms()[i]);
        mean += wi * v;
        mean_sq += wi * v * v;
      }
    }
    const double var = std::max(0.0, mean_sq - mean * mean);
    const double denom = std::sqrt(var) + eta;
    for (int t = 0; t <= steps - 2; ++t) {
      double increment_sum = 0.0;
      for (int i = 0; i < m; ++i)
        increment_sum += m * mu.weights()[i] * delta_m(tf, mu.atoms()[i], j, t);
      penalty += std::abs(increment_sum) / denom;
    }
  }
  return penalty / (m * steps);
}

double causality_residual(const TransportPlan& plan, const PathBatch& atoms_x,
                          const PathBatch& atoms_y, const CausalTestFunctions& tf) {
  if (plan.table.rows() != atoms_x.size() || plan.table.cols() != atoms_y.size())
    throw DimensionError("causality_residual: plan shape must match atom sets");
  const int steps = atoms_x.steps();
  double total = 0.0;
  for (int j = 0; j < tf.families; ++j)
    for (int t = 0; t <= steps - 2; ++t) {
      double term = 0.0;
      for (int i = 0; i < atoms_x.size(); ++i) {
        const double d = delta_m(tf, atoms_x[i], j, t);
        if (d == 0.0) continue;
        for (int l = 0; l < atoms_y.size(); ++l)
          term += plan.table(i, l) * d * tf.eval_h(j, t, atoms_y[l]);
      }
      total += term;
    }
  return std::abs(total);
}

std::vector<int> prefix_classes(const PathBatch& batch, int steps) {
  if (steps < 1 || steps > batch.steps()) throw DomainError("prefix_classes: bad prefix length");
  std::vector<int> ids(batch.size(), -1);
  int next = 0;
  for (int i = 0; i < batch.size(); ++i) {
    if (ids[i] >= 0) continue;
    ids[i] = next;
    for (int l = i + 1; l < batch.size(); ++l) {
      if (ids[l] >= 0) continue;
      if (same_prefix(batch[i].prefix(steps), batch[l].prefix(steps))) ids[l] = next;
    }
    ++next;
  }
  return ids;
}

namespace {

struct LpRows {
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;

  void add(Eigen::RowVectorXd r, double v) {
    rows.push_back(std::move(r));
    rhs.push_back(v);
  }
};

void add_marginal_rows(LpRows& lp, int m, int n, const Vector& wa, const Vector& wb) {
  for (int i = 0; i < m; ++i) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(m * n);
    r.segment(i * n, n).setOnes();
    lp.add(std::move(r), wa[i]);
  }
  for (int l = 0; l < n; ++l) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(m * n);
    for (int i = 0; i < m; ++i) r[i * n + l] = 1.0;
    lp.add(std::move(r), wb[l]);
  }
}

// Causality of the plan from side A to side B, written on prefix
// classes. `flip` selects whether variable (i,l) means (A=i, B=l) or
// (B=l, A=i) in the flattened pi.
void add_causality_rows(LpRows& lp, const PathBatch& atoms_a, const Vector& wa,
                        const PathBatch& atoms_b, int n_total, bool flip) {
  const int ma = atoms_a.size();
  const int mb = atoms_b.size();
  auto var = [&](int ia, int ib) { return flip ? ib * ma + ia : ia * mb + ib; };
  for (int t = 1; t <= atoms_a.steps() - 1; ++t) {
    const std::vector<int> ca = prefix_classes(atoms_a, t);
    const std::vector<int> cb = prefix_classes(atoms_b, t);
    const int n_classes_a = 1 + *std::max_element(ca.begin(), ca.end());
    const int n_classes_b = 1 + *std::max_element(cb.begin(), cb.end());
    std::vector<double> class_mass(n_classes_a, 0.0);
    std::vector<int> class_size(n_classes_a, 0);
    for (int i = 0; i < ma; ++i) {
      class_mass[ca[i]] += wa[i];
      class_size[ca[i]] += 1;
    }
    for (int b = 0; b < n_classes_b; ++b) {
      for (int i = 0; i < ma; ++i) {
        if (class_size[ca[i]] <= 1) continue;  // conditioning adds nothing
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n_total);
        for (int l = 0; l < mb; ++l) {
          if (cb[l] != b) continue;
          r[var(i, l)] += class_mass[ca[i]];
          for (int i2 = 0; i2 < ma; ++i2)
            if (ca[i2] == ca[i]) r[var(i2, l)] -= wa[i];
        }
        lp.add(std::move(r), 0.0);
      }
    }
  }
}

ExactOTResult solve_transport(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                              const CostMatrix& cost, bool causal, bool bicausal) {
  const int m = mu.size(), n = nu.size();
  if (cost.rows() != m || cost.cols() != n)
    throw DimensionError("transport LP: cost shape must match atom counts");
  if (mu.steps() != nu.steps() || mu.features() != nu.features())
    throw DimensionError("transport LP: measures must share (T, d)");

  LpRows lp;
  add_marginal_rows(lp, m, n, mu.weights(), nu.weights());
  if (causal) add_causality_rows(lp, mu.atoms(), mu.weights(), nu.atoms(), m * n, false);
  if (bicausal) add_causality_rows(lp, nu.atoms(), nu.weights(), mu.atoms(), m * n, true);

  const int rows = static_cast<int>(lp.rows.size());
  Matrix a(rows, m * n);
  Vector b(rows);
  for (int r = 0; r < rows; ++r) {
    a.row(r) = lp.rows[r];
    b[r] = lp.rhs[r];
  }
  Vector c(m * n);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < n; ++l) c[i * n + l] = cost.entries(i, l);

  const LpResult sol = solve_lp_equality(a, b, c);
  ExactOTResult out;
  out.constraint_count = rows;
  switch (sol.status) {
    case LpStatus::kOptimal:
      out.solver_status = SolverStatus::kOptimal;
      break;
    case LpStatus::kInfeasible:
      out.solver_status = SolverStatus::kInfeasible;
      return out;
    default:
      out.solver_status = SolverStatus::kNumericalFailure;
      return out;
  }
  out.value = sol.objective;
  out.plan.table = Matrix(m, n);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < n; ++l) out.plan.table(i, l) = std::max(0.0, sol.x[i * n + l]);
  out.plan.marginal_mu = mu.weights();
  out.plan.marginal_nu = nu.weights();
  out.plan.causal = causal;
  out.plan.bicausal = bicausal;
  return out;
}

}  // namespace

ExactOTResult exact_ot_lp(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                          const CostMatrix& cost) {
  if (mu.size() > 64 || nu.size() > 64)
    throw DomainError("exact_ot_lp: oracle capped at 64 atoms per side");
  return solve_transport(mu, nu, cost, false, false);
}

ExactOTResult exact_causal_ot(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                              const CostMatrix& cost) {
  if (mu.size() > 16 || nu.size() > 16)
    throw DomainError("exact_causal_ot: oracle capped at 16 atoms per side");
  if (mu.steps() > 4) throw DomainError("exact_causal_ot: oracle capped at T <= 4");
  return solve_transport(mu, nu, cost, true, false);
}

ExactOTResult adapted_wasserstein(const DiscretePathMeasure& mu, const DiscretePathMeasure& nu,
                                  const CostMatrix& cost) {
  if (mu.size() > 16 || nu.size() > 16)
    throw DomainError("adapted_wasserstein: oracle capped at 16 atoms per side");
  if (mu.steps() > 4) throw DomainError("adapted_wasserstein: oracle capped at T <= 4");
  return solve_transport(mu, nu, cost, true, true);
}

namespace {

// Affine function of (last step mean, running mean) with fixed coefficients.
PrefixFn summary_affine(double w_last, double w_mean, double bias) {
  return [=](const Eigen::Ref<const Matrix>& prefix) {
    const double last = prefix.row(prefix.rows() - 1).mean();
    const double running = prefix.mean();
    return w_last * last + w_mean * running + bias;
  };
}

}  // namespace

CausalTestFunctions sample_admissible_test_functions(const DiscretePathMeasure& mu,
                                                     int families, std::uint64_t seed) {
  const int steps = mu.steps();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  CausalTestFunctions tf;
  tf.families = families;
  tf.clamp = 10.0;
  tf.h.resize(families);
  tf.m.resize(families);

  for (int j = 0; j < families; ++j) {
    tf.h[j].resize(steps - 1);
    for (int t = 0; t < steps - 1; ++t)
      tf.h[j][t] = summary_affine(unit(rng), unit(rng), 0.5 * unit(rng));

    // Base statistics psi_t; the martingale accumulates their increments
    // centered by conditional means over the prefix classes of mu.
    std::vector<PrefixFn> psi(steps);
    for (int t = 0; t < steps; ++t)
      psi[t] = summary_affine(0.3 * unit(rng), 0.3 * unit(rng), 0.1 * unit(rng));

    // Conditional mean of psi_{t+1} given the class of x_{0..t}, stored per atom.
    // center[t][class] = E_mu[ psi_{t+1}(X_{0..t+1}) | X_{0..t} in class ].
    auto centers = std::make_shared<std::vector<std::vector<double>>>(steps - 1);
    auto class_reps =
        std::make_shared<std::vector<std::vector<std::pair<Matrix, int>>>>(steps - 1);
    for (int t = 0; t < steps - 1; ++t) {
      const std::vector<int> cls = prefix_classes(mu.atoms(), t + 1);
      const int n_classes = 1 + *std::max_element(cls.begin(), cls.end());
      std::vector<double> num(n_classes, 0.0), den(n_classes, 0.0);
      for (int i = 0; i < mu.size(); ++i) {
        num[cls[i]] += mu.weights()[i] * psi[t + 1](mu.atoms()[i].prefix(t + 2));
        den[cls[i]] += mu.weights()[i];
      }
      (*centers)[t].resize(n_classes);
      for (int c = 0; c < n_classes; ++c)
        (*centers)[t][c] = den[c] > 0 ? num[c] / den[c] : 0.0;
      for (int i = 0; i < mu.size(); ++i) {
        bool seen = false;
        for (auto& [rep, c] : (*class_reps)[t])
          if (c == cls[i]) seen = true;
        if (!seen) (*class_reps)[t].emplace_back(mu.atoms()[i].prefix(t + 1), cls[i]);
      }
    }

    auto lookup_center = [centers, class_reps](int t, const Eigen::Ref<const Matrix>& prefix) {
      for (const auto& [rep, c] : (*class_reps)[t])
        if (same_prefix(rep, prefix)) return (*centers)[t][c];
      return 0.0;  // off the support of mu; martingale property only claimed on it
    };

    tf.m[j].resize(steps);
    std::vector<PrefixFn> psi_copy = psi;
    for (int t = 0; t < steps; ++t) {
      tf.m[j][t] = [t, psi_copy, lookup_center](const Eigen::Ref<const Matrix>& prefix) {
        double acc = 0.0;
        for (int s = 1; s <= t; ++s)
          acc += psi_copy[s](prefix.topRows(s + 1)) -
                 lookup_center(s - 1, prefix.topRows(s));
        return acc;
      };
    }
  }
  return tf;
}

}  // namespace cotk
