#pragma once

#include <cstdint>
#include <vector>

#include "cotk/types.hpp"

namespace cotk {

enum class DatasetKind { kAr1, kSineMixture, kDegenerateReveal };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kAr1;
  int n = 0;
  int steps = 0;
  int features = 1;
  std::uint64_t seed = 0;
  // ar1
  double ar1_coeff = 0.8;
  double ar1_sigma = 0.5;
  // sine_mixture
  std::vector<double> frequencies{1.0, 2.0, 3.0};
  double amplitude_noise = 0.1;
  // degenerate_reveal: value revealed at time 1 is repeated at time 2
  int grid_points = 160;

  void validate() const;
};

// ar1: stationary start, x_{t+1} = a x_t + sigma xi, features independent.
// sine_mixture: per-path random amplitude/phase/frequency sinusoid plus noise.
// degenerate_reveal: T=2, x1 uniform on an evenly spaced grid over [0,1], x2 = x1.
PathBatch generate_dataset(const DatasetSpec& spec);

}  // namespace cotk
