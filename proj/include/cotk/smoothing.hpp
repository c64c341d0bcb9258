#pragma once

#include <cstdint>
#include <random>

#include "cotk/types.hpp"

namespace cotk {

enum class KernelFamily { kGaussian, kUniformCompact };

// How empirical measures get adapted before the divergence sees them.
enum class SmoothingMode { kAdditive, kTemporalBlur, kOff };

struct SmoothingSpec {
  KernelFamily kernel = KernelFamily::kGaussian;
  double bandwidth = 1.0;
  int samples_per_atom = 1;
  double truncation = 8.0;  // support clamp in bandwidth units (gaussian only)
  std::uint64_t seed = 0;   // used by callers to build their generator

  void validate() const;
};

// Bandwidth decayed over training iterations:
// max(h_floor, h_init * decay_rate^(step / decay_every)), real exponent.
struct BandwidthSchedule {
  double h_init = 1.5;
  double h_floor = 0.1;
  double decay_rate = 0.985;
  long decay_every = 10000;

  void validate() const;
};

// One i.i.d. kernel draw per coordinate, scaled by the bandwidth.
// Gaussian draws are rejected outside +-truncation*h; the compact kernel
// is uniform on [-h, h].
Matrix kernel_sample(const SmoothingSpec& spec, int steps, int features, std::mt19937_64& rng);

// ADDITIVE: Monte Carlo representation of the kernel convolution; every
// atom spawns samples_per_atom perturbed copies carrying weight
// w_i / samples_per_atom. TEMPORAL_BLUR: each path is convolved along the
// time axis (and the feature axis when d > 1) with a normalized truncated
// kernel filter; atom count and weights are unchanged. OFF passes through.
DiscretePathMeasure smooth_measure(const DiscretePathMeasure& raw, const SmoothingSpec& spec,
                                   SmoothingMode mode, std::mt19937_64& rng);

double bandwidth_at(const BandwidthSchedule& schedule, long step);

// Sample-size bandwidth family h_m = c * m^(-beta); which of the four
// convergence conditions hold for the given parameters.
struct BandwidthFamilyCheck {
  bool vanishes;        // h_m -> 0
  bool mass_over_log;   // m h_m / |log h_m| -> inf
  bool log_dominates;   // |log h_m| / log log m -> inf
  bool mass;            // m h_m -> inf
  bool admissible() const { return vanishes && mass_over_log && log_dominates && mass; }
};

BandwidthFamilyCheck check_bandwidth_family(double beta, double c);

// True iff all four conditions hold, i.e. 0 < beta < 1 for this family.
bool admissible_bandwidth_family(double beta, double c);

// Blur filter taps for one axis: offsets -radius..radius with
// per-position renormalization handled by the caller.
std::vector<double> blur_taps(KernelFamily kernel, double bandwidth, double truncation,
                              int axis_length);

}  // namespace cotk
