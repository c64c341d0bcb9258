#include "cotk/core.hpp"

#include <cmath>

namespace cotk {

Path::Path(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1)
    throw DimensionError("Path needs at least one step and one feature");
  if (!values_.allFinite()) throw DomainError("Path entries must be finite");
}

PathBatch::PathBatch(std::vector<Path> paths) : paths_(std::move(paths)) {
  if (paths_.empty()) throw DimensionError("PathBatch must contain at least one path");
  const int t = paths_.front().steps();
  const int d = paths_.front().features();
  for (const Path& p : paths_)
    if (p.steps() != t || p.features() != d)
      throw DimensionError("PathBatch members must share (T, d)");
}

DiscretePathMeasure::DiscretePathMeasure(PathBatch atoms, Vector weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (weights_.size() != atoms_.size())
    throw DimensionError("weight count must match atom count");
  if ((weights_.array() < 0).any())
    throw DomainError("measure weights must be nonnegative");
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > 1e-9)
    throw DomainError("measure weights must sum to 1 within 1e-9, got sum " +
                      std::to_string(total));
  weights_ /= total;
}

DiscretePathMeasure DiscretePathMeasure::uniform(PathBatch atoms) {
  const int m = atoms.size();
  return DiscretePathMeasure(std::move(atoms), Vector::Constant(m, 1.0 / m));
}

double ground_cost(const Path& x, const Path& y) {
  if (x.steps() != y.steps() || x.features() != y.features())
    throw DimensionError("ground_cost: paths must share (T, d)");
  return (x.values() - y.values()).squaredNorm();
}

CostMatrix cost_matrix(const PathBatch& x, const PathBatch& y) {
  if (x.steps() != y.steps() || x.features() != y.features())
    throw DimensionError("cost_matrix: batches must share (T, d)");
  Matrix c(x.size(), y.size());
  for (int i = 0; i < x.size(); ++i)
    for (int j = 0; j < y.size(); ++j)
      c(i, j) = (x[i].values() - y[j].values()).squaredNorm();
  return CostMatrix{std::move(c), "sq_euclidean_sum"};
}

Path concat_condition(const Path& context, const Path& prediction) {
  if (context.features() != prediction.features())
    throw DimensionError("concat_condition: feature dimensions differ");
  const int k = context.steps();
  const int rest = prediction.steps();
  Matrix full(k + rest, context.features());
  full.topRows(k) = context.values();
  full.bottomRows(rest) = prediction.values();
  return Path(std::move(full));
}

}  // namespace cotk
