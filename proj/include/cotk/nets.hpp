#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cotk/ad.hpp"
#include "cotk/sinkhorn.hpp"  // Grid
#include "cotk/types.hpp"

namespace cotk {

struct ParamSlice {
  std::string name;
  int offset = 0;
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
};

// Flat parameter storage with named, shaped slices and a parallel
// gradient buffer.
class ParamVector {
 public:
  int add(const std::string& name, int rows, int cols);

  int size() const { return static_cast<int>(data_.size()); }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& grad() { return grad_; }
  const std::vector<ParamSlice>& slices() const { return slices_; }
  const ParamSlice& slice(const std::string& name) const;

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }
  void check_finite(const std::string& context) const;

 private:
  std::vector<double> data_;
  std::vector<double> grad_;
  std::vector<ParamSlice> slices_;
};

// Binary checkpoint: magic "COTP1", slice count, then per slice the
// name, shape and row-major doubles, all little-endian.
void save_params(const ParamVector& params, const std::string& path);
ParamVector load_params(const std::string& path);

// Fill dst's slices from same-named slices of src (shapes must agree).
void copy_params_by_name(ParamVector& dst, const ParamVector& src);

// Lift doubles onto a tape as leaves.
std::vector<ad::Value> lift(ad::Tape& tape, std::span<const double> xs);

// Drives a tape evaluation of f at the given parameters and returns the
// value together with d(value)/d(params).
using TapeFn = std::function<ad::Value(ad::Tape&, std::span<const ad::Value>)>;
std::pair<double, std::vector<double>> forward_backward(const TapeFn& f,
                                                        std::span<const double> params);

// ---------------------------------------------------------------------------
// Recurrent summary network: tanh cell over the sequence, per-step affine
// readout squashed to [-clamp, clamp]. Output at step t only sees input
// rows 0..t.

struct SummaryNetConfig {
  int features = 1;
  int hidden = 32;
  int outputs = 4;  // J
  double clamp = 10.0;
};

struct SummaryNet {
  SummaryNetConfig cfg;
  int w_cell = 0, b_cell = 0, w_out = 0, b_out = 0;

  static SummaryNet create(ParamVector& params, const std::string& prefix,
                           const SummaryNetConfig& cfg);
  void init(ParamVector& params, std::mt19937_64& rng) const;
};

namespace detail {

// state_next = tanh(W [input; state] + b); returns readout row-major.
template <class S>
void cell_step(std::span<const S> params, int w_off, int b_off, int in_dim, int hidden,
               std::span<const S> input, std::vector<S>& state, std::vector<S>& scratch) {
  using scalar::dot;
  using scalar::tanh;
  scratch.resize(in_dim + hidden);
  for (int i = 0; i < in_dim; ++i) scratch[i] = input[i];
  for (int i = 0; i < hidden; ++i) scratch[in_dim + i] = state[i];
  std::span<const S> in_span(scratch.data(), scratch.size());
  for (int r = 0; r < hidden; ++r) {
    const S pre = dot(params.subspan(w_off + r * (in_dim + hidden),
                                     static_cast<std::size_t>(in_dim + hidden)),
                      in_span) +
                  params[b_off + r];
    state[r] = tanh(pre);
  }
}

}  // namespace detail

// Outputs per time step for the whole sequence: rows = J, cols = T.
template <class S>
Grid<S> summary_forward(const SummaryNet& net, std::span<const S> params, const Grid<S>& path) {
  using scalar::dot;
  using scalar::tanh;
  const int steps = path.rows;
  const int d = net.cfg.features;
  const int hidden = net.cfg.hidden;
  const double bound = net.cfg.clamp;

  Grid<S> out(net.cfg.outputs, steps);
  std::vector<S> state(hidden);
  // start the recurrence from materialized zeros (well-formed handles on a tape)
  for (int i = 0; i < hidden; ++i) state[i] = params[net.w_cell] * 0.0;
  std::vector<S> scratch;
  for (int t = 0; t < steps; ++t) {
    detail::cell_step(params, net.w_cell, net.b_cell, d, hidden, path.row(t), state, scratch);
    std::span<const S> st(state.data(), state.size());
    for (int j = 0; j < net.cfg.outputs; ++j) {
      const S pre =
          dot(params.subspan(net.w_out + j * hidden, static_cast<std::size_t>(hidden)), st) +
          params[net.b_out + j];
      out(j, t) = tanh(pre * (1.0 / bound)) * bound;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder-decoder generator. The encoder is a stack of recurrent layers
// over the input sequence; the decoder predicts step t+1 from the
// deepest features at t, the observation at t (teacher forcing) and
// noise, through decoder_layers >= encoder_layers + 1 recurrent layers
// with an affine readout.

struct GeneratorConfig {
  int features = 1;
  int hidden = 32;
  int noise_dim = 4;
  int encoder_layers = 1;
  int decoder_layers = 2;
  double noise_init_scale = 1.0;  // extra gain on the noise input columns
};

struct Generator {
  GeneratorConfig cfg;
  struct Layer {
    int w = 0, b = 0;
    int in_dim = 0;
  };
  std::vector<Layer> enc, dec;
  int w_read = 0, b_read = 0;

  static Generator create(ParamVector& params, const std::string& prefix,
                          const GeneratorConfig& cfg);
  void init(ParamVector& params, std::mt19937_64& rng) const;

  // Input feature width of decoder layer `idx`.
  int decoder_input_dim(int idx) const;
};

// Hierarchical features, one T x hidden grid per encoder layer.
template <class S>
std::vector<Grid<S>> encode(const Generator& gen, std::span<const S> params,
                            const Grid<S>& path) {
  const int steps = path.rows;
  const int hidden = gen.cfg.hidden;
  std::vector<Grid<S>> features;
  std::vector<S> state(hidden), scratch;
  for (int layer = 0; layer < gen.cfg.encoder_layers; ++layer) {
    const Grid<S>& input = layer == 0 ? path : features.back();
    Grid<S> feat(steps, hidden);
    for (int i = 0; i < hidden; ++i) state[i] = params[gen.enc[layer].w] * 0.0;
    for (int t = 0; t < steps; ++t) {
      detail::cell_step(params, gen.enc[layer].w, gen.enc[layer].b, gen.enc[layer].in_dim,
                        hidden, input.row(t), state, scratch);
      for (int i = 0; i < hidden; ++i) feat(t, i) = state[i];
    }
    features.push_back(std::move(feat));
  }
  return features;
}

// Predictions for steps k..T-1 conditioned on real observations
// (teacher forcing): step t is produced from features and observation at
// t-1 plus noise row t-k.
template <class S>
Grid<S> decode_teacher_forced(const Generator& gen, std::span<const S> params,
                              const std::vector<Grid<S>>& features, const Grid<S>& path,
                              const Grid<S>& noise, int k) {
  using scalar::dot;
  const int steps = path.rows;
  const int d = gen.cfg.features;
  const int hidden = gen.cfg.hidden;
  const int n_layers = gen.cfg.encoder_layers;
  const int l_layers = gen.cfg.decoder_layers;
  if (k < 1 || k > steps - 1) throw DomainError("decode: context length out of range");

  std::vector<std::vector<S>> states(l_layers, std::vector<S>(hidden));
  for (int layer = 0; layer < l_layers; ++layer)
    for (int i = 0; i < hidden; ++i) states[layer][i] = params[gen.dec[layer].w] * 0.0;

  Grid<S> out(steps - k, d);
  std::vector<S> input, scratch;
  for (int t = k; t < steps; ++t) {
    const int p = t - k;
    for (int layer = 0; layer < l_layers; ++layer) {
      input.clear();
      if (layer == 0) {
        const Grid<S>& deepest = features[n_layers - 1];
        for (int i = 0; i < hidden; ++i) input.push_back(deepest(t - 1, i));
        for (int i = 0; i < gen.cfg.noise_dim; ++i) input.push_back(noise(p, i));
      } else if (layer < l_layers - 1) {
        if (n_layers - layer >= 1) {
          const Grid<S>& feat = features[n_layers - layer - 1];
          for (int i = 0; i < hidden; ++i) input.push_back(feat(t - 1, i));
        }
        for (int i = 0; i < hidden; ++i) input.push_back(states[layer - 1][i]);
      } else {
        for (int i = 0; i < d; ++i) input.push_back(path(t - 1, i));
        for (int i = 0; i < hidden; ++i) input.push_back(states[layer - 1][i]);
      }
      detail::cell_step(params, gen.dec[layer].w, gen.dec[layer].b, gen.dec[layer].in_dim,
                        hidden, std::span<const S>(input.data(), input.size()), states[layer],
                        scratch);
    }
    std::span<const S> top(states[l_layers - 1].data(), states[l_layers - 1].size());
    for (int f = 0; f < d; ++f)
      out(p, f) =
          dot(params.subspan(gen.w_read + f * hidden, static_cast<std::size_t>(hidden)), top) +
          params[gen.b_read + f];
  }
  return out;
}

// Inference-time rollout: the encoder is extended with the model's own
// predictions once real observations run out.
Matrix decode_autoregressive(const Generator& gen, std::span<const double> params,
                             const Matrix& context, const Matrix& noise, int total_steps);

}  // namespace cotk
