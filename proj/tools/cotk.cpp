// Command-line front end: dataset generation, training, evaluation, the
// smoothed-vs-raw estimator study, and exact-oracle comparison tables.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cotk/causal.hpp"
#include "cotk/config.hpp"
#include "cotk/core.hpp"
#include "cotk/datasets.hpp"
#include "cotk/eval.hpp"
#include "cotk/experiments.hpp"
#include "cotk/io.hpp"
#include "cotk/training.hpp"

namespace {

using nlohmann::ordered_json;

cotk::DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "ar1") return cotk::DatasetKind::kAr1;
  if (s == "sine_mixture") return cotk::DatasetKind::kSineMixture;
  if (s == "degenerate_reveal") return cotk::DatasetKind::kDegenerateReveal;
  throw cotk::ConfigError("dataset must be ar1, sine_mixture or degenerate_reveal, got: " + s);
}

std::vector<double> parse_double_list(const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

cotk::DatasetSpec dataset_from_kv(const cotk::KvConfig& kv) {
  cotk::DatasetSpec spec;
  spec.kind = dataset_kind_from_string(kv.require("dataset"));
  spec.n = static_cast<int>(kv.require_long("n_paths"));
  spec.steps = static_cast<int>(kv.require_long("steps"));
  spec.features = static_cast<int>(kv.get_long("features", 1));
  spec.seed = static_cast<std::uint64_t>(kv.get_long("data_seed", 0));
  spec.ar1_coeff = kv.get_double("ar1_a", spec.ar1_coeff);
  spec.ar1_sigma = kv.get_double("ar1_sigma", spec.ar1_sigma);
  if (kv.has("frequencies")) spec.frequencies = parse_double_list(kv.require("frequencies"));
  spec.amplitude_noise = kv.get_double("amplitude_noise", spec.amplitude_noise);
  spec.grid_points = static_cast<int>(kv.get_long("grid_points", spec.grid_points));
  return spec;
}

std::string annotation(const std::string& config_hash, std::uint64_t seed) {
  return "# config_hash=" + config_hash + " seed=" + std::to_string(seed) + "\n";
}

void write_eval_json(const cotk::EvalResult& result, const std::string& path,
                     const std::string& config_hash, std::uint64_t seed, int k) {
  ordered_json j;
  j["schema"] = "cotk-eval/1";
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["k"] = k;
  if (std::isnan(result.cond_mean_rmse))
    j["cond_mean_rmse"] = nullptr;
  else
    j["cond_mean_rmse"] = result.cond_mean_rmse;
  j["divergence_heldout"] = result.divergence_heldout;
  j["per_step"] = ordered_json::array();
  for (const cotk::EvalStepStat& s : result.per_step)
    j["per_step"].push_back({{"t", s.t},
                             {"pred_mean", s.pred_mean},
                             {"pred_var", s.pred_var},
                             {"real_mean", s.real_mean},
                             {"real_var", s.real_var}});
  std::ofstream out(path);
  if (!out) throw cotk::IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

// Rebuild nets with the training-time layout and load checkpoint values.
struct LoadedModel {
  cotk::ParamVector theta;
  cotk::ParamVector phi;
  cotk::Generator gen;
  cotk::SummaryNet h_net, m_net;
};

LoadedModel load_model(const std::string& checkpoint, const cotk::TrainConfig& cfg,
                       int features) {
  LoadedModel model;
  cotk::GeneratorConfig gcfg;
  gcfg.features = features;
  gcfg.hidden = cfg.hidden_size;
  gcfg.noise_dim = cfg.noise_dim;
  gcfg.encoder_layers = cfg.encoder_layers;
  gcfg.decoder_layers = cfg.decoder_layers;
  model.gen = cotk::Generator::create(model.theta, "gen", gcfg);
  cotk::SummaryNetConfig scfg;
  scfg.features = features;
  scfg.hidden = cfg.hidden_size;
  scfg.outputs = cfg.families;
  scfg.clamp = cfg.clamp;
  model.h_net = cotk::SummaryNet::create(model.phi, "disc_h", scfg);
  model.m_net = cotk::SummaryNet::create(model.phi, "disc_m", scfg);
  const cotk::ParamVector stored = cotk::load_params(checkpoint);
  cotk::copy_params_by_name(model.theta, stored);
  cotk::copy_params_by_name(model.phi, stored);
  return model;
}

int run(int argc, char** argv) {
  CLI::App app{"causal transport toolkit"};
  app.require_subcommand(1);

  // ---- generate ----
  auto* gen_cmd = app.add_subcommand("generate", "sample a synthetic dataset to disk");
  std::string gen_kind = "ar1", gen_out, gen_format = "csv", gen_freqs;
  long gen_n = 128, gen_steps = 10, gen_features = 1, gen_seed = 0, gen_grid = 160;
  double gen_a = 0.8, gen_sigma = 0.5, gen_amp_noise = 0.1;
  gen_cmd->add_option("--kind", gen_kind, "ar1 | sine_mixture | degenerate_reveal");
  gen_cmd->add_option("--n", gen_n, "number of paths");
  gen_cmd->add_option("--steps", gen_steps, "time steps T");
  gen_cmd->add_option("--features", gen_features, "feature width d");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--a", gen_a, "ar1 coefficient");
  gen_cmd->add_option("--sigma", gen_sigma, "ar1 innovation scale");
  gen_cmd->add_option("--frequencies", gen_freqs, "sine frequencies, comma separated");
  gen_cmd->add_option("--amplitude-noise", gen_amp_noise, "sine observation noise");
  gen_cmd->add_option("--grid-points", gen_grid, "grid size for degenerate_reveal");
  gen_cmd->add_option("--out", gen_out, "output file")->required();
  gen_cmd->add_option("--format", gen_format, "csv | binary");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "run the adversarial trainer from a config");
  std::string train_config, train_out_dir;
  std::vector<std::string> train_sets;
  train_cmd->add_option("--config", train_config, "flat key=value config file")->required();
  train_cmd->add_option("--out-dir", train_out_dir, "artifact directory (overrides out_dir)");
  train_cmd->add_option("--set", train_sets, "override, key=value (repeatable)");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint against fresh data");
  std::string eval_ckpt, eval_config, eval_out;
  std::vector<std::string> eval_sets;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "COTP1 checkpoint")->required();
  eval_cmd->add_option("--config", eval_config, "config used for training")->required();
  eval_cmd->add_option("--set", eval_sets, "override, key=value (repeatable)");
  eval_cmd->add_option("--out", eval_out, "evaluation JSON path")->required();

  // ---- converge ----
  auto* conv_cmd = app.add_subcommand("converge", "smoothed vs raw estimator study");
  std::string conv_m = "4,8,16", conv_kernel = "gaussian", conv_out, conv_summary;
  long conv_seeds = 20, conv_grid = 0, conv_spa = 1, conv_base_seed = 1000, conv_threads = 1;
  double conv_beta = 0.5, conv_scale = 1.0;
  conv_cmd->add_option("--m-grid", conv_m, "sample sizes, comma separated");
  conv_cmd->add_option("--seeds", conv_seeds, "seeds per sample size");
  conv_cmd->add_option("--beta", conv_beta, "bandwidth exponent, h_m = scale * m^-beta");
  conv_cmd->add_option("--scale", conv_scale, "bandwidth scale");
  conv_cmd->add_option("--kernel", conv_kernel, "gaussian | uniform_compact");
  conv_cmd->add_option("--samples-per-atom", conv_spa, "Monte Carlo width of the convolution");
  conv_cmd->add_option("--grid-points", conv_grid, "data grid size (0: ten times max m)");
  conv_cmd->add_option("--base-seed", conv_base_seed, "experiment seed");
  conv_cmd->add_option("--threads", conv_threads, "worker threads");
  conv_cmd->add_option("--out", conv_out, "per-draw report CSV")->required();
  conv_cmd->add_option("--summary", conv_summary, "summary CSV");

  // ---- oracle ----
  auto* oracle_cmd = app.add_subcommand("oracle", "exact transport values on tiny instances");
  std::string oracle_out, oracle_sinkhorn_out, oracle_trace_out;
  long oracle_instances = 20, oracle_seed = 7, oracle_iters = 5000;
  double oracle_eps = 0.01;
  oracle_cmd->add_option("--instances", oracle_instances, "instance count");
  oracle_cmd->add_option("--seed", oracle_seed, "instance seed");
  oracle_cmd->add_option("--out", oracle_out, "oracle CSV")->required();
  oracle_cmd->add_option("--sinkhorn-out", oracle_sinkhorn_out,
                         "entropic-vs-exact comparison CSV");
  oracle_cmd->add_option("--epsilon", oracle_eps, "regularization for the comparison");
  oracle_cmd->add_option("--iterations", oracle_iters, "iteration budget for the comparison");
  oracle_cmd->add_option("--trace-out", oracle_trace_out,
                         "per-iteration trace of the last instance");

  CLI11_PARSE(app, argc, argv);

  if (*gen_cmd) {
    cotk::DatasetSpec spec;
    spec.kind = dataset_kind_from_string(gen_kind);
    spec.n = static_cast<int>(gen_n);
    spec.steps = static_cast<int>(gen_steps);
    spec.features = static_cast<int>(gen_features);
    spec.seed = static_cast<std::uint64_t>(gen_seed);
    spec.ar1_coeff = gen_a;
    spec.ar1_sigma = gen_sigma;
    if (!gen_freqs.empty()) spec.frequencies = parse_double_list(gen_freqs);
    spec.amplitude_noise = gen_amp_noise;
    spec.grid_points = static_cast<int>(gen_grid);
    const cotk::PathBatch batch = cotk::generate_dataset(spec);

    std::ostringstream canon;
    canon << "kind=" << gen_kind << " n=" << gen_n << " steps=" << gen_steps
          << " features=" << gen_features << " seed=" << gen_seed;
    const std::string hash = cotk::hash_hex(cotk::fnv1a64(canon.str()));
    if (gen_format == "csv") {
      std::ofstream out(gen_out);
      if (!out) throw cotk::IoError("cannot open for writing: " + gen_out);
      out << annotation(hash, spec.seed);
      cotk::write_batch_csv(batch, out);
    } else if (gen_format == "binary") {
      cotk::write_batch_binary(batch, gen_out);
      ordered_json meta{{"schema", "cotk-batch-meta/1"},
                        {"config_hash", hash},
                        {"seed", spec.seed}};
      std::ofstream meta_out(gen_out + ".meta.json");
      meta_out << meta.dump(2) << "\n";
    } else {
      throw cotk::ConfigError("format must be csv or binary, got: " + gen_format);
    }
    std::cout << "wrote " << batch.size() << " paths to " << gen_out << "\n";
    return 0;
  }

  if (*train_cmd) {
    cotk::KvConfig kv = cotk::KvConfig::parse_file(train_config);
    for (const std::string& s : train_sets) kv.apply_override(s);
    const cotk::TrainConfig cfg = cotk::train_config_from_kv(kv);
    const cotk::DatasetSpec data_spec = dataset_from_kv(kv);
    const std::string out_dir =
        !train_out_dir.empty() ? train_out_dir : kv.require("out_dir");
    std::filesystem::create_directories(out_dir);
    const std::string hash = cotk::hash_hex(cotk::fnv1a64(kv.canonical()));

    const cotk::PathBatch dataset = cotk::generate_dataset(data_spec);
    cotk::TrainSinks sinks;
    sinks.metrics_csv = (std::filesystem::path(out_dir) / "metrics.csv").string();
    sinks.checkpoint_dir = out_dir;
    sinks.manifest_path = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
    sinks.config_hash = hash;
    const cotk::TrainResult result = cotk::train(dataset, cfg, &sinks);

    // Final evaluation against held-out draws from the same law.
    cotk::DatasetSpec heldout = data_spec;
    heldout.seed = static_cast<std::uint64_t>(
        kv.get_long("eval_seed", static_cast<long>(data_spec.seed) + 1));
    heldout.n = static_cast<int>(kv.get_long("eval_heldout", 64));
    cotk::EvalConfig ecfg;
    ecfg.n_contexts = static_cast<int>(kv.get_long("eval_contexts", 64));
    ecfg.n_rollouts = static_cast<int>(kv.get_long("eval_rollouts", 256));
    ecfg.seed = heldout.seed;
    const cotk::EvalResult eval = cotk::evaluate_generator(
        result.state.gen, result.state.theta, heldout, cfg.context_length, ecfg);
    write_eval_json(eval, (std::filesystem::path(out_dir) / "eval.json").string(), hash,
                    heldout.seed, cfg.context_length);
    std::cout << "trained " << cfg.total_steps << " steps; artifacts in " << out_dir << "\n";
    return 0;
  }

  if (*eval_cmd) {
    cotk::KvConfig kv = cotk::KvConfig::parse_file(eval_config);
    for (const std::string& s : eval_sets) kv.apply_override(s);
    const cotk::TrainConfig cfg = cotk::train_config_from_kv(kv);
    cotk::DatasetSpec heldout = dataset_from_kv(kv);
    heldout.seed = static_cast<std::uint64_t>(
        kv.get_long("eval_seed", static_cast<long>(heldout.seed) + 1));
    heldout.n = static_cast<int>(kv.get_long("eval_heldout", 64));
    const LoadedModel model = load_model(eval_ckpt, cfg, heldout.features);
    cotk::EvalConfig ecfg;
    ecfg.n_contexts = static_cast<int>(kv.get_long("eval_contexts", 64));
    ecfg.n_rollouts = static_cast<int>(kv.get_long("eval_rollouts", 256));
    ecfg.seed = heldout.seed;
    const cotk::EvalResult eval =
        cotk::evaluate_generator(model.gen, model.theta, heldout, cfg.context_length, ecfg);
    const std::string hash = cotk::hash_hex(cotk::fnv1a64(kv.canonical()));
    write_eval_json(eval, eval_out, hash, heldout.seed, cfg.context_length);
    std::cout << "wrote " << eval_out << "\n";
    return 0;
  }

  if (*conv_cmd) {
    cotk::ConvergenceSettings settings;
    settings.m_grid.clear();
    for (double v : parse_double_list(conv_m)) settings.m_grid.push_back(static_cast<int>(v));
    settings.n_seeds = static_cast<int>(conv_seeds);
    settings.beta = conv_beta;
    settings.scale = conv_scale;
    settings.kernel = conv_kernel == "uniform_compact" ? cotk::KernelFamily::kUniformCompact
                                                       : cotk::KernelFamily::kGaussian;
    settings.samples_per_atom = static_cast<int>(conv_spa);
    settings.grid_points = static_cast<int>(conv_grid);
    settings.base_seed = static_cast<std::uint64_t>(conv_base_seed);
    settings.threads = static_cast<int>(conv_threads);

    std::ostringstream canon;
    canon << "m=" << conv_m << " seeds=" << conv_seeds << " beta=" << conv_beta
          << " scale=" << conv_scale << " kernel=" << conv_kernel << " spa=" << conv_spa
          << " grid=" << conv_grid << " base_seed=" << conv_base_seed;
    const std::string hash = cotk::hash_hex(cotk::fnv1a64(canon.str()));

    const std::vector<cotk::ConvergenceRow> rows = cotk::convergence_experiment(settings);
    cotk::write_convergence_csv(rows, conv_out, hash);
    if (!conv_summary.empty())
      cotk::write_convergence_summary_csv(cotk::summarize_convergence(rows), conv_summary, hash);
    std::cout << "wrote " << rows.size() << " rows to " << conv_out << "\n";
    return 0;
  }

  if (*oracle_cmd) {
    const std::vector<cotk::OracleRow> rows =
        cotk::oracle_study(static_cast<int>(oracle_instances),
                           static_cast<std::uint64_t>(oracle_seed));
    cotk::write_oracle_csv(rows, oracle_out);

    if (!oracle_sinkhorn_out.empty() || !oracle_trace_out.empty()) {
      std::ofstream cmp;
      if (!oracle_sinkhorn_out.empty()) {
        cmp.open(oracle_sinkhorn_out);
        if (!cmp) throw cotk::IoError("cannot open for writing: " + oracle_sinkhorn_out);
        cmp << "instance_id,epsilon,iterations,sinkhorn_cost,w,gap\n";
      }
      cotk::SinkhornConfig scfg;
      scfg.epsilon = oracle_eps;
      scfg.iterations = static_cast<int>(oracle_iters);
      scfg.record_trace = !oracle_trace_out.empty();
      for (int i = 0; i < static_cast<int>(oracle_instances); ++i) {
        // same instance stream as the oracle CSV, so ids line up
        const cotk::OracleInstance inst = cotk::random_tree_instance(
            cotk::oracle_instance_seed(static_cast<std::uint64_t>(oracle_seed), i));
        const cotk::CostMatrix cost = cotk::cost_matrix(inst.mu.atoms(), inst.nu.atoms());
        const cotk::SinkhornSolution sol = cotk::sinkhorn_solve(inst.mu, inst.nu, cost, scfg);
        if (cmp.is_open())
          cmp << i << ',' << oracle_eps << ',' << oracle_iters << ','
              << cotk::format_double(sol.transport_cost) << ','
              << cotk::format_double(rows[static_cast<std::size_t>(i)].w) << ','
              << cotk::format_double(sol.transport_cost - rows[static_cast<std::size_t>(i)].w)
              << "\n";
        if (!oracle_trace_out.empty() && i + 1 == static_cast<int>(oracle_instances)) {
          std::ofstream trace(oracle_trace_out);
          if (!trace) throw cotk::IoError("cannot open for writing: " + oracle_trace_out);
          trace << "iter,objective,marginal_err\n";
          for (const cotk::SinkhornTraceRow& row : sol.trace)
            trace << row.iter << ',' << cotk::format_double(row.objective) << ','
                  << cotk::format_double(row.marginal_err) << "\n";
        }
      }
    }
    std::cout << "wrote " << rows.size() << " instances to " << oracle_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cotk::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const cotk::DomainError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const cotk::DimensionError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const cotk::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return 3;
  } catch (const cotk::IoError& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
