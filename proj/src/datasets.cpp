#include "cotk/datasets.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace cotk {

void DatasetSpec::validate() const {
  if (n < 1) throw DomainError("dataset: need at least one path");
  if (features < 1) throw DomainError("dataset: need at least one feature");
  switch (kind) {
    case DatasetKind::kAr1:
      if (std::abs(ar1_coeff) >= 1.0) throw DomainError("ar1: need |a| < 1 for stationarity");
      if (ar1_sigma < 0) throw DomainError("ar1: sigma must be nonnegative");
      if (steps < 2) throw DomainError("ar1: need at least two steps");
      break;
    case DatasetKind::kSineMixture:
      if (frequencies.empty()) throw DomainError("sine_mixture: frequency set is empty");
      if (amplitude_noise < 0) throw DomainError("sine_mixture: noise must be nonnegative");
      if (steps < 2) throw DomainError("sine_mixture: need at least two steps");
      break;
    case DatasetKind::kDegenerateReveal:
      if (steps != 2) throw DomainError("degenerate_reveal: fixed to two steps");
      if (grid_points < 2) throw DomainError("degenerate_reveal: need at least two grid points");
      break;
  }
}

PathBatch generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Path> paths;
  paths.reserve(spec.n);

  switch (spec.kind) {
    case DatasetKind::kAr1: {
      const double a = spec.ar1_coeff;
      const double stationary_sd =
          spec.ar1_sigma > 0 ? spec.ar1_sigma / std::sqrt(1.0 - a * a) : 0.0;
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int i = 0; i < spec.n; ++i) {
        Matrix v(spec.steps, spec.features);
        for (int f = 0; f < spec.features; ++f) v(0, f) = stationary_sd * normal(rng);
        for (int t = 1; t < spec.steps; ++t)
          for (int f = 0; f < spec.features; ++f)
            v(t, f) = a * v(t - 1, f) + spec.ar1_sigma * normal(rng);
        paths.emplace_back(std::move(v));
      }
      break;
    }
    case DatasetKind::kSineMixture: {
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> amp(0.5, 1.5);
      std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
      std::uniform_int_distribution<std::size_t> pick(0, spec.frequencies.size() - 1);
      for (int i = 0; i < spec.n; ++i) {
        Matrix v(spec.steps, spec.features);
        for (int f = 0; f < spec.features; ++f) {
          const double a = amp(rng);
          const double p0 = phase(rng);
          const double omega = spec.frequencies[pick(rng)];
          for (int t = 0; t < spec.steps; ++t)
            v(t, f) = a * std::sin(omega * t + p0) + spec.amplitude_noise * normal(rng);
        }
        paths.emplace_back(std::move(v));
      }
      break;
    }
    case DatasetKind::kDegenerateReveal: {
      std::uniform_int_distribution<int> pick(0, spec.grid_points - 1);
      for (int i = 0; i < spec.n; ++i) {
        Matrix v(2, spec.features);
        for (int f = 0; f < spec.features; ++f) {
          const double x = static_cast<double>(pick(rng)) / (spec.grid_points - 1);
          v(0, f) = x;
          v(1, f) = x;  // revealed value repeats bit-exactly
        }
        paths.emplace_back(std::move(v));
      }
      break;
    }
  }
  return PathBatch(std::move(paths));
}

}  // namespace cotk
