#include "cotk/nets.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace cotk {

int ParamVector::add(const std::string& name, int rows, int cols) {
  for (const ParamSlice& s : slices_)
    if (s.name == name) throw DomainError("duplicate parameter slice: " + name);
  const int offset = size();
  slices_.push_back({name, offset, rows, cols});
  data_.resize(offset + rows * cols, 0.0);
  grad_.resize(data_.size(), 0.0);
  return offset;
}

const ParamSlice& ParamVector::slice(const std::string& name) const {
  for (const ParamSlice& s : slices_)
    if (s.name == name) return s;
  throw DomainError("unknown parameter slice: " + name);
}

void ParamVector::check_finite(const std::string& context) const {
  for (double v : data_)
    if (!std::isfinite(v)) throw NumericalError("non-finite parameter after " + context);
}

namespace {

constexpr char kParamMagic[5] = {'C', 'O', 'T', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

void save_params(const ParamVector& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kParamMagic, sizeof(kParamMagic));
  put_u64(out, params.slices().size());
  for (const ParamSlice& s : params.slices()) {
    put_u64(out, s.name.size());
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put_u64(out, static_cast<std::uint64_t>(s.rows));
    put_u64(out, static_cast<std::uint64_t>(s.cols));
    out.write(reinterpret_cast<const char*>(params.data().data() + s.offset),
              static_cast<std::streamsize>(sizeof(double) * s.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

ParamVector load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kParamMagic, sizeof(magic)) != 0)
    throw IoError("bad magic, not a COTP1 checkpoint");
  const std::uint64_t n = get_u64(in);
  if (n > 4096) throw IoError("implausible slice count");
  ParamVector params;
  for (std::uint64_t s = 0; s < n; ++s) {
    const std::uint64_t name_len = get_u64(in);
    if (name_len > 4096) throw IoError("implausible slice name length");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rows = get_u64(in), cols = get_u64(in);
    if (rows * cols > (1u << 26)) throw IoError("implausible slice size");
    const int offset = params.add(name, static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(params.data().data() + offset),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw IoError("truncated checkpoint");
  }
  return params;
}

void copy_params_by_name(ParamVector& dst, const ParamVector& src) {
  for (const ParamSlice& s : dst.slices()) {
    const ParamSlice& from = src.slice(s.name);
    if (from.rows != s.rows || from.cols != s.cols)
      throw DimensionError("checkpoint slice shape mismatch for " + s.name);
    for (int i = 0; i < s.size(); ++i) dst.data()[s.offset + i] = src.data()[from.offset + i];
  }
}

std::vector<ad::Value> lift(ad::Tape& tape, std::span<const double> xs) {
  std::vector<ad::Value> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(tape.leaf(x));
  return out;
}

std::pair<double, std::vector<double>> forward_backward(const TapeFn& f,
                                                        std::span<const double> params) {
  ad::Tape tape(4 * params.size() + 1024);
  const std::vector<ad::Value> leaves = lift(tape, params);
  const ad::Value root = f(tape, leaves);
  tape.backward(root);
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grad[i] = tape.grad(leaves[i]);
  return {root.val(), std::move(grad)};
}

namespace {

void xavier_init(std::span<double> w, int fan_in, int fan_out, double scale,
                 std::mt19937_64& rng) {
  const double bound = scale * std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : w) v = u(rng);
}

}  // namespace

SummaryNet SummaryNet::create(ParamVector& params, const std::string& prefix,
                              const SummaryNetConfig& cfg) {
  SummaryNet net;
  net.cfg = cfg;
  const int in = cfg.features + cfg.hidden;
  net.w_cell = params.add(prefix + "/cell_w", cfg.hidden, in);
  net.b_cell = params.add(prefix + "/cell_b", cfg.hidden, 1);
  net.w_out = params.add(prefix + "/out_w", cfg.outputs, cfg.hidden);
  net.b_out = params.add(prefix + "/out_b", cfg.outputs, 1);
  return net;
}

void SummaryNet::init(ParamVector& params, std::mt19937_64& rng) const {
  const int in = cfg.features + cfg.hidden;
  xavier_init(std::span<double>(params.data().data() + w_cell, cfg.hidden * in), in, cfg.hidden,
              1.0, rng);
  // small readout keeps the learned cost near the ground cost early on
  xavier_init(std::span<double>(params.data().data() + w_out, cfg.outputs * cfg.hidden),
              cfg.hidden, cfg.outputs, 0.1, rng);
}

int Generator::decoder_input_dim(int idx) const {
  const int n = cfg.encoder_layers, l = cfg.decoder_layers;
  if (idx == 0) return cfg.hidden + cfg.noise_dim;
  if (idx == l - 1) return cfg.features + cfg.hidden;
  return (n - idx >= 1 ? cfg.hidden : 0) + cfg.hidden;
}

Generator Generator::create(ParamVector& params, const std::string& prefix,
                            const GeneratorConfig& cfg) {
  if (cfg.decoder_layers < cfg.encoder_layers + 1)
    throw DomainError("generator: need decoder_layers >= encoder_layers + 1");
  if (cfg.encoder_layers < 1) throw DomainError("generator: need at least one encoder layer");
  Generator gen;
  gen.cfg = cfg;
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    Layer layer;
    layer.in_dim = i == 0 ? cfg.features : cfg.hidden;
    layer.w = params.add(prefix + "/enc" + std::to_string(i) + "_w", cfg.hidden,
                         layer.in_dim + cfg.hidden);
    layer.b = params.add(prefix + "/enc" + std::to_string(i) + "_b", cfg.hidden, 1);
    gen.enc.push_back(layer);
  }
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    Layer layer;
    layer.in_dim = gen.decoder_input_dim(i);
    layer.w = params.add(prefix + "/dec" + std::to_string(i) + "_w", cfg.hidden,
                         layer.in_dim + cfg.hidden);
    layer.b = params.add(prefix + "/dec" + std::to_string(i) + "_b", cfg.hidden, 1);
    gen.dec.push_back(layer);
  }
  gen.w_read = params.add(prefix + "/read_w", cfg.features, cfg.hidden);
  gen.b_read = params.add(prefix + "/read_b", cfg.features, 1);
  return gen;
}

void Generator::init(ParamVector& params, std::mt19937_64& rng) const {
  for (const Layer& layer : enc)
    xavier_init(std::span<double>(params.data().data() + layer.w,
                                  cfg.hidden * (layer.in_dim + cfg.hidden)),
                layer.in_dim + cfg.hidden, cfg.hidden, 1.0, rng);
  for (const Layer& layer : dec)
    xavier_init(std::span<double>(params.data().data() + layer.w,
                                  cfg.hidden * (layer.in_dim + cfg.hidden)),
                layer.in_dim + cfg.hidden, cfg.hidden, 1.0, rng);
  if (cfg.noise_init_scale != 1.0) {
    // keep the stochastic path audible at the start of training
    const Layer& first = dec.front();
    const int row_len = first.in_dim + cfg.hidden;
    for (int r = 0; r < cfg.hidden; ++r)
      for (int c = cfg.hidden; c < first.in_dim; ++c)
        params.data()[first.w + r * row_len + c] *= cfg.noise_init_scale;
  }
  xavier_init(std::span<double>(params.data().data() + w_read, cfg.features * cfg.hidden),
              cfg.hidden, cfg.features, 1.0, rng);
}

Matrix decode_autoregressive(const Generator& gen, std::span<const double> params,
                             const Matrix& context, const Matrix& noise, int total_steps) {
  const int k = static_cast<int>(context.rows());
  const int d = gen.cfg.features;
  const int hidden = gen.cfg.hidden;
  const int n_layers = gen.cfg.encoder_layers;
  const int l_layers = gen.cfg.decoder_layers;
  if (k < 1 || k > total_steps - 1)
    throw DomainError("decode_autoregressive: context length out of range");
  if (noise.rows() != total_steps - k || noise.cols() != gen.cfg.noise_dim)
    throw DimensionError("decode_autoregressive: noise shape mismatch");

  // Rolling encoder states and the latest feature row per layer.
  std::vector<std::vector<double>> enc_state(n_layers, std::vector<double>(hidden, 0.0));
  std::vector<std::vector<double>> feat(n_layers, std::vector<double>(hidden, 0.0));
  std::vector<double> scratch, input;

  auto encoder_step = [&](std::span<const double> x_row) {
    for (int layer = 0; layer < n_layers; ++layer) {
      std::span<const double> in_span =
          layer == 0 ? x_row : std::span<const double>(feat[layer - 1]);
      detail::cell_step<double>(params, gen.enc[layer].w, gen.enc[layer].b,
                                gen.enc[layer].in_dim, hidden, in_span, enc_state[layer],
                                scratch);
      feat[layer] = enc_state[layer];
    }
  };

  std::vector<double> x_prev(d);
  for (int t = 0; t < k; ++t) {
    for (int f = 0; f < d; ++f) x_prev[f] = context(t, f);
    encoder_step(std::span<const double>(x_prev));
  }

  std::vector<std::vector<double>> dec_state(l_layers, std::vector<double>(hidden, 0.0));
  Matrix out(total_steps - k, d);
  for (int t = k; t < total_steps; ++t) {
    const int p = t - k;
    for (int layer = 0; layer < l_layers; ++layer) {
      input.clear();
      if (layer == 0) {
        for (int i = 0; i < hidden; ++i) input.push_back(feat[n_layers - 1][i]);
        for (int i = 0; i < gen.cfg.noise_dim; ++i) input.push_back(noise(p, i));
      } else if (layer < l_layers - 1) {
        if (n_layers - layer >= 1)
          for (int i = 0; i < hidden; ++i) input.push_back(feat[n_layers - layer - 1][i]);
        for (int i = 0; i < hidden; ++i) input.push_back(dec_state[layer - 1][i]);
      } else {
        for (int f = 0; f < d; ++f) input.push_back(x_prev[f]);
        for (int i = 0; i < hidden; ++i) input.push_back(dec_state[layer - 1][i]);
      }
      detail::cell_step<double>(params, gen.dec[layer].w, gen.dec[layer].b,
                                gen.dec[layer].in_dim, hidden,
                                std::span<const double>(input), dec_state[layer], scratch);
    }
    for (int f = 0; f < d; ++f) {
      double v = params[gen.b_read + f];
      for (int i = 0; i < hidden; ++i)
        v += params[gen.w_read + f * hidden + i] * dec_state[l_layers - 1][i];
      out(p, f) = v;
    }
    // the model's own output becomes the next observation
    for (int f = 0; f < d; ++f) x_prev[f] = out(p, f);
    encoder_step(std::span<const double>(x_prev));
  }
  return out;
}

}  // namespace cotk
