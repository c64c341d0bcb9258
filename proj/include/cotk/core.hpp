#pragma once

#include "cotk/types.hpp"

namespace cotk {

// Squared-distance path cost: sum over time of the squared Euclidean
// distance between the feature vectors, c(x,y) = sum_t ||x_t - y_t||^2.
double ground_cost(const Path& x, const Path& y);

// Tabulates ground_cost over all atom pairs.
CostMatrix cost_matrix(const PathBatch& x, const PathBatch& y);

// Glues a k-step context onto a (T-k)-step continuation. The result's
// first k rows are `context` bit-exactly.
Path concat_condition(const Path& context, const Path& prediction);

}  // namespace cotk
