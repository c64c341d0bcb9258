#include "cotk/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <random>
#include <set>

#include "cotk/core.hpp"
#include "cotk/datasets.hpp"
#include "cotk/io.hpp"

namespace cotk {

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = base ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xBF58476D1CE4E5B9ull);
  h ^= h >> 30;
  h *= 0xBF58476D1CE4E5B9ull;
  h ^= h >> 27;
  return h;
}

const char* status_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kOptimal: return "optimal";
    case SolverStatus::kInfeasible: return "infeasible";
    default: return "numerical_failure";
  }
}

PathBatch grid_sample(const std::vector<int>& idx, int grid_points) {
  std::vector<Path> paths;
  paths.reserve(idx.size());
  for (int i : idx) {
    Matrix v(2, 1);
    v(0, 0) = static_cast<double>(i) / (grid_points - 1);
    v(1, 0) = v(0, 0);
    paths.emplace_back(std::move(v));
  }
  return PathBatch(std::move(paths));
}

}  // namespace

std::vector<ConvergenceRow> convergence_experiment(const ConvergenceSettings& settings) {
  if (!admissible_bandwidth_family(settings.beta, settings.scale))
    throw DomainError("convergence experiment: bandwidth family must be admissible");
  const int max_m = *std::max_element(settings.m_grid.begin(), settings.m_grid.end());
  const int grid_points = settings.grid_points > 0 ? settings.grid_points : 10 * max_m;

  struct Job {
    int m;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int m : settings.m_grid)
    for (int s = 0; s < settings.n_seeds; ++s)
      jobs.push_back({m, static_cast<std::uint64_t>(s)});

  auto run_job = [&](const Job& job) {
    std::mt19937_64 rng(mix_seed(settings.base_seed, job.m, job.seed));
    std::uniform_int_distribution<int> pick(0, grid_points - 1);

    // Independent samples that share no atoms, so the raw estimate cannot
    // collapse to zero by accident.
    std::vector<int> ia(job.m), ib(job.m);
    for (;;) {
      for (int& v : ia) v = pick(rng);
      for (int& v : ib) v = pick(rng);
      std::set<int> sa(ia.begin(), ia.end());
      bool collision = false;
      for (int v : ib)
        if (sa.count(v)) collision = true;
      if (!collision) break;
    }
    const DiscretePathMeasure mu = DiscretePathMeasure::uniform(grid_sample(ia, grid_points));
    const DiscretePathMeasure nu = DiscretePathMeasure::uniform(grid_sample(ib, grid_points));

    std::vector<ConvergenceRow> rows;
    {
      const ExactOTResult res = adapted_wasserstein(mu, nu, cost_matrix(mu.atoms(), nu.atoms()));
      rows.push_back({job.m, job.seed, false, res.value, res.solver_status});
    }
    {
      SmoothingSpec spec;
      spec.kernel = settings.kernel;
      spec.bandwidth = settings.scale * std::pow(job.m, -settings.beta);
      spec.samples_per_atom = settings.samples_per_atom;
      spec.truncation = settings.truncation;
      const DiscretePathMeasure mu_s = smooth_measure(mu, spec, SmoothingMode::kAdditive, rng);
      const DiscretePathMeasure nu_s = smooth_measure(nu, spec, SmoothingMode::kAdditive, rng);
      const ExactOTResult res =
          adapted_wasserstein(mu_s, nu_s, cost_matrix(mu_s.atoms(), nu_s.atoms()));
      rows.push_back({job.m, job.seed, true, res.value, res.solver_status});
    }
    return rows;
  };

  std::vector<ConvergenceRow> all;
  if (settings.threads > 1) {
    std::vector<std::future<std::vector<ConvergenceRow>>> futures;
    futures.reserve(jobs.size());
    for (const Job& job : jobs)
      futures.push_back(std::async(std::launch::async, run_job, job));
    for (auto& f : futures)
      for (ConvergenceRow& row : f.get()) all.push_back(row);
  } else {
    for (const Job& job : jobs)
      for (ConvergenceRow& row : run_job(job)) all.push_back(row);
  }
  std::sort(all.begin(), all.end(), [](const ConvergenceRow& a, const ConvergenceRow& b) {
    return std::tie(a.m, a.seed, a.smoothed) < std::tie(b.m, b.seed, b.smoothed);
  });
  return all;
}

std::vector<ModeSummary> summarize_convergence(const std::vector<ConvergenceRow>& rows) {
  std::vector<ModeSummary> out;
  for (const ConvergenceRow& row : rows) {
    ModeSummary* s = nullptr;
    for (ModeSummary& cand : out)
      if (cand.m == row.m && cand.smoothed == row.smoothed) s = &cand;
    if (!s) {
      out.push_back({row.m, row.smoothed, 0, 0.0, 0.0});
      s = &out.back();
    }
    ++s->count;
    s->mean += row.aw;
  }
  for (ModeSummary& s : out) s.mean /= s.count;
  for (ModeSummary& s : out) {
    double ss = 0.0;
    for (const ConvergenceRow& row : rows)
      if (row.m == s.m && row.smoothed == s.smoothed) ss += (row.aw - s.mean) * (row.aw - s.mean);
    s.stderr_mean = s.count > 1 ? std::sqrt(ss / (s.count - 1) / s.count) : 0.0;
  }
  std::sort(out.begin(), out.end(), [](const ModeSummary& a, const ModeSummary& b) {
    return std::tie(a.m, a.smoothed) < std::tie(b.m, b.smoothed);
  });
  return out;
}

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, const std::string& path,
                           const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "m,seed,mode,aw,status,config_hash\n";
  for (const ConvergenceRow& row : rows)
    out << row.m << ',' << row.seed << ',' << (row.smoothed ? "smoothed" : "raw") << ','
        << format_double(row.aw) << ',' << status_string(row.status) << ',' << config_hash
        << "\n";
  if (!out) throw IoError("write failed: " + path);
}

void write_convergence_summary_csv(const std::vector<ModeSummary>& summaries,
                                   const std::string& path, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "m,mode,count,mean,stderr,config_hash\n";
  for (const ModeSummary& s : summaries)
    out << s.m << ',' << (s.smoothed ? "smoothed" : "raw") << ',' << s.count << ','
        << format_double(s.mean) << ',' << format_double(s.stderr_mean) << ',' << config_hash
        << "\n";
  if (!out) throw IoError("write failed: " + path);
}

OracleInstance random_tree_instance(std::uint64_t seed, int max_atoms, int max_steps,
                                    int max_features) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> steps_pick(2, max_steps);
  std::uniform_int_distribution<int> feat_pick(1, max_features);
  const int steps = steps_pick(rng);
  const int d = feat_pick(rng);

  auto make_measure = [&]() {
    std::uniform_int_distribution<int> atoms_pick(2, max_atoms);
    const int m = atoms_pick(rng);
    std::vector<Path> atoms;
    for (int i = 0; i < m; ++i) {
      Matrix v(steps, d);
      int start = 0;
      if (i > 0 && unit(rng) < 0.6) {
        // branch off an existing atom: copy its prefix bit-exactly
        std::uniform_int_distribution<int> donor_pick(0, i - 1);
        std::uniform_int_distribution<int> len_pick(1, steps - 1);
        const int donor = donor_pick(rng);
        const int len = len_pick(rng);
        v.topRows(len) = atoms[donor].values().topRows(len);
        start = len;
      }
      for (int t = start; t < steps; ++t)
        for (int f = 0; f < d; ++f) v(t, f) = coord(rng);
      atoms.emplace_back(std::move(v));
    }
    Vector w(m);
    for (int i = 0; i < m; ++i) w[i] = 0.25 + unit(rng);
    w /= w.sum();
    return DiscretePathMeasure(PathBatch(std::move(atoms)), std::move(w));
  };

  DiscretePathMeasure mu = make_measure();
  DiscretePathMeasure nu = make_measure();
  return OracleInstance{std::move(mu), std::move(nu)};
}

std::uint64_t oracle_instance_seed(std::uint64_t seed, int instance_id) {
  return mix_seed(seed, static_cast<std::uint64_t>(instance_id), 17);
}

std::vector<OracleRow> oracle_study(int instances, std::uint64_t seed) {
  std::vector<OracleRow> rows;
  for (int i = 0; i < instances; ++i) {
    const OracleInstance inst = random_tree_instance(oracle_instance_seed(seed, i));
    const CostMatrix cost = cost_matrix(inst.mu.atoms(), inst.nu.atoms());
    const ExactOTResult w = exact_ot_lp(inst.mu, inst.nu, cost);
    const ExactOTResult wk = exact_causal_ot(inst.mu, inst.nu, cost);
    const ExactOTResult aw = adapted_wasserstein(inst.mu, inst.nu, cost);
    SolverStatus status = SolverStatus::kOptimal;
    for (const ExactOTResult* r : {&w, &wk, &aw})
      if (r->solver_status != SolverStatus::kOptimal) status = r->solver_status;
    rows.push_back({i, w.value, wk.value, aw.value, status});
  }
  return rows;
}

void write_oracle_csv(const std::vector<OracleRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "instance_id,w,wk,aw,status\n";
  for (const OracleRow& row : rows)
    out << row.instance_id << ',' << format_double(row.w) << ',' << format_double(row.wk) << ','
        << format_double(row.aw) << ',' << status_string(row.status) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace cotk
