#include "cotk/smoothing.hpp"

#include <cmath>

namespace cotk {

void SmoothingSpec::validate() const {
  if (bandwidth <= 0) throw DomainError("smoothing: bandwidth must be positive");
  if (samples_per_atom < 1) throw DomainError("smoothing: samples_per_atom must be >= 1");
  if (truncation <= 0) throw DomainError("smoothing: truncation must be positive");
}

void BandwidthSchedule::validate() const {
  if (!(h_init >= h_floor && h_floor > 0))
    throw DomainError("bandwidth schedule: need h_init >= h_floor > 0");
  if (!(decay_rate > 0 && decay_rate < 1))
    throw DomainError("bandwidth schedule: decay_rate must be in (0, 1)");
  if (decay_every < 1) throw DomainError("bandwidth schedule: decay_every must be positive");
}

Matrix kernel_sample(const SmoothingSpec& spec, int steps, int features, std::mt19937_64& rng) {
  spec.validate();
  Matrix out(steps, features);
  if (spec.kernel == KernelFamily::kGaussian) {
    std::normal_distribution<double> normal(0.0, spec.bandwidth);
    const double bound = spec.truncation * spec.bandwidth;
    for (int t = 0; t < steps; ++t)
      for (int f = 0; f < features; ++f) {
        double v;
        do {
          v = normal(rng);
        } while (std::abs(v) > bound);
        out(t, f) = v;
      }
  } else {
    std::uniform_real_distribution<double> uniform(-spec.bandwidth, spec.bandwidth);
    for (int t = 0; t < steps; ++t)
      for (int f = 0; f < features; ++f) out(t, f) = uniform(rng);
  }
  return out;
}

std::vector<double> blur_taps(KernelFamily kernel, double bandwidth, double truncation,
                              int axis_length) {
  int radius;
  if (kernel == KernelFamily::kGaussian)
    radius = static_cast<int>(std::ceil(truncation * bandwidth));
  else
    radius = static_cast<int>(std::floor(bandwidth));
  radius = std::max(0, std::min(radius, axis_length - 1));
  std::vector<double> taps(2 * radius + 1);
  for (int o = -radius; o <= radius; ++o)
    taps[o + radius] = kernel == KernelFamily::kGaussian
                           ? std::exp(-0.5 * o * o / (bandwidth * bandwidth))
                           : 1.0;
  return taps;
}

namespace {

// Separable blur with edge renormalization, so constants are preserved.
Matrix blur_axis(const Matrix& values, const std::vector<double>& taps, bool along_time) {
  const int radius = static_cast<int>(taps.size() / 2);
  const int n = along_time ? static_cast<int>(values.rows()) : static_cast<int>(values.cols());
  Matrix out = values;
  for (int pos = 0; pos < n; ++pos) {
    double norm = 0.0;
    for (int o = -radius; o <= radius; ++o) {
      const int q = pos + o;
      if (q >= 0 && q < n) norm += taps[o + radius];
    }
    if (along_time) {
      out.row(pos).setZero();
      for (int o = -radius; o <= radius; ++o) {
        const int q = pos + o;
        if (q >= 0 && q < n) out.row(pos) += (taps[o + radius] / norm) * values.row(q);
      }
    } else {
      out.col(pos).setZero();
      for (int o = -radius; o <= radius; ++o) {
        const int q = pos + o;
        if (q >= 0 && q < n) out.col(pos) += (taps[o + radius] / norm) * values.col(q);
      }
    }
  }
  return out;
}

}  // namespace

DiscretePathMeasure smooth_measure(const DiscretePathMeasure& raw, const SmoothingSpec& spec,
                                   SmoothingMode mode, std::mt19937_64& rng) {
  if (mode == SmoothingMode::kOff) return raw;
  spec.validate();
  const int m = raw.size();

  if (mode == SmoothingMode::kAdditive) {
    const int s = spec.samples_per_atom;
    std::vector<Path> atoms;
    atoms.reserve(static_cast<std::size_t>(m) * s);
    Vector weights(static_cast<Eigen::Index>(m) * s);
    for (int i = 0; i < m; ++i)
      for (int rep = 0; rep < s; ++rep) {
        atoms.emplace_back(raw.atoms()[i].values() +
                           kernel_sample(spec, raw.steps(), raw.features(), rng));
        weights[static_cast<Eigen::Index>(i) * s + rep] = raw.weights()[i] / s;
      }
    return DiscretePathMeasure(PathBatch(std::move(atoms)), std::move(weights));
  }

  // TEMPORAL_BLUR
  const std::vector<double> time_taps =
      blur_taps(spec.kernel, spec.bandwidth, spec.truncation, raw.steps());
  const std::vector<double> feat_taps =
      blur_taps(spec.kernel, spec.bandwidth, spec.truncation, raw.features());
  std::vector<Path> atoms;
  atoms.reserve(m);
  for (int i = 0; i < m; ++i) {
    Matrix v = blur_axis(raw.atoms()[i].values(), time_taps, true);
    if (raw.features() > 1) v = blur_axis(v, feat_taps, false);
    atoms.emplace_back(std::move(v));
  }
  return DiscretePathMeasure(PathBatch(std::move(atoms)), raw.weights());
}

double bandwidth_at(const BandwidthSchedule& schedule, long step) {
  schedule.validate();
  if (step < 0) throw DomainError("bandwidth_at: step must be nonnegative");
  const double decayed =
      schedule.h_init *
      std::pow(schedule.decay_rate, static_cast<double>(step) / schedule.decay_every);
  return std::max(schedule.h_floor, decayed);
}

BandwidthFamilyCheck check_bandwidth_family(double beta, double c) {
  if (c <= 0) throw DomainError("bandwidth family: scale c must be positive");
  BandwidthFamilyCheck out;
  // h_m = c m^-beta vanishes iff beta > 0.
  out.vanishes = beta > 0;
  // m h_m = c m^(1-beta): diverges iff beta < 1; dividing by |log h_m|
  // ~ beta log m does not change that.
  out.mass = beta < 1;
  out.mass_over_log = beta < 1;
  // |log h_m| ~ beta log m dominates log log m only when beta > 0.
  out.log_dominates = beta > 0;
  return out;
}

bool admissible_bandwidth_family(double beta, double c) {
  return check_bandwidth_family(beta, c).admissible();
}

}  // namespace cotk
