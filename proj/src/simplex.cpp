#include "cotk/simplex.hpp"

#include <cmath>
#include <vector>

namespace cotk {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kFeasTol = 1e-7;

}  // namespace

LpResult solve_lp_equality(const Matrix& a, const Vector& b, const Vector& c) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  if (b.size() != m || c.size() != n)
    throw DimensionError("solve_lp_equality: inconsistent shapes");

  // Tableau layout: columns [real vars | artificials | rhs], rows
  // [constraints | phase-1 objective | phase-2 objective].
  const int cols = n + m + 1;
  Matrix t = Matrix::Zero(m + 2, cols);
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) {
    const double sign = b[i] < 0 ? -1.0 : 1.0;
    t.row(i).head(n) = sign * a.row(i);
    t(i, n + i) = 1.0;
    t(i, cols - 1) = sign * b[i];
    basis[i] = n + i;
  }
  // Phase-1 reduced costs: minimize sum of artificials; with the
  // artificial basis, reduced cost of column j is -sum_i t(i,j).
  for (int j = 0; j < n; ++j) t(m, j) = -t.col(j).head(m).sum();
  t(m, cols - 1) = -t.col(cols - 1).head(m).sum();
  // Phase-2 costs start unreduced (basic artificials have zero real cost).
  t.row(m + 1).head(n) = c.transpose();

  std::vector<bool> row_active(m, true);

  auto pivot = [&](int r, int s) {
    t.row(r) /= t(r, s);
    for (int i = 0; i < m + 2; ++i) {
      if (i == r) continue;
      const double factor = t(i, s);
      if (factor != 0.0) t.row(i) -= factor * t.row(r);
    }
    basis[r] = s;
  };

  // Bland's rule: entering = lowest-index column with negative reduced
  // cost; leaving = ratio-test winner with the lowest basis index.
  auto iterate = [&](int obj_row, int allowed_cols) -> bool {
    for (;;) {
      int s = -1;
      for (int j = 0; j < allowed_cols; ++j)
        if (t(obj_row, j) < -kPivotTol) {
          s = j;
          break;
        }
      if (s < 0) return true;  // optimal
      int r = -1;
      double best_ratio = 0.0;
      for (int i = 0; i < m; ++i) {
        if (!row_active[i] || t(i, s) <= kPivotTol) continue;
        const double ratio = t(i, cols - 1) / t(i, s);
        if (r < 0 || ratio < best_ratio - 1e-15 ||
            (std::abs(ratio - best_ratio) <= 1e-15 && basis[i] < basis[r])) {
          r = i;
          best_ratio = ratio;
        }
      }
      if (r < 0) return false;  // unbounded
      pivot(r, s);
    }
  };

  LpResult result;
  if (!iterate(m, n)) {  // phase 1 over real columns only
    result.status = LpStatus::kNumericalFailure;
    return result;
  }
  if (t(m, cols - 1) < -kFeasTol) {
    result.status = LpStatus::kInfeasible;
    return result;
  }

  // Drive artificials out of the basis; rows that cannot pivot are
  // redundant constraints and get deactivated.
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    int s = -1;
    for (int j = 0; j < n; ++j)
      if (std::abs(t(i, j)) > kPivotTol) {
        s = j;
        break;
      }
    if (s >= 0)
      pivot(i, s);
    else
      row_active[i] = false;
  }

  if (!iterate(m + 1, n)) {
    result.status = LpStatus::kUnbounded;
    return result;
  }

  result.x = Vector::Zero(n);
  for (int i = 0; i < m; ++i)
    if (row_active[i] && basis[i] < n) result.x[basis[i]] = t(i, cols - 1);
  result.objective = c.dot(result.x);
  result.status = LpStatus::kOptimal;
  return result;
}

}  // namespace cotk
