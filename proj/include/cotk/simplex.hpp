#pragma once

#include "cotk/types.hpp"

namespace cotk {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };

struct LpResult {
  LpStatus status = LpStatus::kNumericalFailure;
  double objective = 0.0;
  Vector x;
};

// Minimizes c'x subject to A x = b, x >= 0, by two-phase dense simplex
// with Bland's rule. Deterministic; intended for tiny instances only.
LpResult solve_lp_equality(const Matrix& a, const Vector& b, const Vector& c);

}  // namespace cotk
