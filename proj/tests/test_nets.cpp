#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cotk/nets.hpp"

using namespace cotk;

namespace {

Grid<double> random_grid(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Grid<double> g(rows, cols);
  for (double& v : g.v) v = u(rng);
  return g;
}

double central_diff(const std::function<double(std::span<const double>)>& f,
                    std::vector<double> x, std::size_t i, double h = 1e-5) {
  x[i] += h;
  const double up = f(x);
  x[i] -= 2 * h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

bool grad_close(double got, double want, double rel = 1e-4, double abs_floor = 1e-8) {
  return std::abs(got - want) <= rel * std::max(std::abs(got), std::abs(want)) + abs_floor;
}

struct TestNet {
  ParamVector params;
  SummaryNet net;
};

TestNet make_summary_net(int features, std::uint64_t seed, int hidden = 8, int outputs = 3) {
  TestNet tn;
  SummaryNetConfig cfg;
  cfg.features = features;
  cfg.hidden = hidden;
  cfg.outputs = outputs;
  cfg.clamp = 10.0;
  tn.net = SummaryNet::create(tn.params, "net", cfg);
  std::mt19937_64 rng(seed);
  tn.net.init(tn.params, rng);
  return tn;
}

struct TestGen {
  ParamVector params;
  Generator gen;
};

TestGen make_generator(int features, std::uint64_t seed, int hidden = 8, int noise_dim = 2,
                       int enc = 1, int dec = 2) {
  TestGen tg;
  GeneratorConfig cfg;
  cfg.features = features;
  cfg.hidden = hidden;
  cfg.noise_dim = noise_dim;
  cfg.encoder_layers = enc;
  cfg.decoder_layers = dec;
  tg.gen = Generator::create(tg.params, "gen", cfg);
  std::mt19937_64 rng(seed);
  tg.gen.init(tg.params, rng);
  return tg;
}

}  // namespace

TEST_CASE("summary net: zero readout weights give identically zero h") {
  TestNet tn = make_summary_net(2, 1);
  std::fill(tn.params.data().begin() + tn.net.w_out,
            tn.params.data().begin() + tn.net.w_out + 3 * 8, 0.0);
  std::fill(tn.params.data().begin() + tn.net.b_out,
            tn.params.data().begin() + tn.net.b_out + 3, 0.0);
  std::mt19937_64 rng(2);
  const Grid<double> path = random_grid(5, 2, rng);
  const Grid<double> out = summary_forward<double>(
      tn.net, std::span<const double>(tn.params.data()), path);
  for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("summary net outputs respect the clamp bound") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TestNet tn = make_summary_net(3, seed);
    // inflate the readout so the squash has to do the bounding
    for (int i = 0; i < 3 * 8; ++i) tn.params.data()[tn.net.w_out + i] *= 500.0;
    std::mt19937_64 rng(seed + 100);
    const Grid<double> path = random_grid(6, 3, rng, 2.0);
    const Grid<double> out = summary_forward<double>(
        tn.net, std::span<const double>(tn.params.data()), path);
    for (double v : out.v) CHECK(std::abs(v) <= 10.0);
  }
}

TEST_CASE("summary net is causal: later inputs never move earlier outputs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    TestNet tn = make_summary_net(2, 1000 + trial);
    const Grid<double> path = random_grid(6, 2, rng);
    const Grid<double> base = summary_forward<double>(
        tn.net, std::span<const double>(tn.params.data()), path);

    std::uniform_int_distribution<int> pick_t(1, 5);
    const int s = pick_t(rng);
    Grid<double> bumped = path;
    bumped(s, trial % 2) += 1.7;
    const Grid<double> moved = summary_forward<double>(
        tn.net, std::span<const double>(tn.params.data()), bumped);
    for (int j = 0; j < 3; ++j)
      for (int t = 0; t < s; ++t) CHECK(moved(j, t) == base(j, t));
  }
}

TEST_CASE("summary net gradient matches finite differences") {
  TestNet tn = make_summary_net(2, 3);
  std::mt19937_64 rng(4);
  const Grid<double> path = random_grid(4, 2, rng);

  const auto plain = [&](std::span<const double> p) {
    const Grid<double> out = summary_forward<double>(tn.net, p, path);
    double s = 0.0;
    for (std::size_t i = 0; i < out.v.size(); ++i) s += (i % 3 == 0 ? 1.0 : 0.5) * out.v[i];
    return s;
  };
  const TapeFn taped = [&](ad::Tape& tape, std::span<const ad::Value> p) {
    Grid<ad::Value> lifted(path.rows, path.cols);
    for (std::size_t i = 0; i < path.v.size(); ++i) lifted.v[i] = tape.leaf(path.v[i]);
    const Grid<ad::Value> out = summary_forward<ad::Value>(tn.net, p, lifted);
    ad::Value s = tape.leaf(0.0);
    for (std::size_t i = 0; i < out.v.size(); ++i)
      s = s + out.v[i] * (i % 3 == 0 ? 1.0 : 0.5);
    return s;
  };

  const auto [value, grad] = forward_backward(taped, tn.params.data());
  CHECK(value == doctest::Approx(plain(tn.params.data())).epsilon(1e-12));
  std::mt19937_64 pick_rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, tn.params.data().size() - 1);
  for (int probe = 0; probe < 25; ++probe) {
    const std::size_t i = pick(pick_rng);
    const double fd = central_diff(plain, tn.params.data(), i);
    INFO("param ", i);
    CHECK(grad_close(grad[i], fd));
  }
}

TEST_CASE("encoder: feature shapes and structural causality") {
  TestGen tg = make_generator(2, 11, 8, 2, 2, 3);
  std::mt19937_64 rng(12);
  const Grid<double> path = random_grid(7, 2, rng);
  const std::vector<Grid<double>> feats =
      encode<double>(tg.gen, std::span<const double>(tg.params.data()), path);
  REQUIRE(feats.size() == 2);
  for (const Grid<double>& f : feats) {
    CHECK(f.rows == 7);
    CHECK(f.cols == 8);
  }

  Grid<double> bumped = path;
  bumped(4, 1) -= 0.9;
  const std::vector<Grid<double>> moved =
      encode<double>(tg.gen, std::span<const double>(tg.params.data()), bumped);
  for (std::size_t layer = 0; layer < feats.size(); ++layer)
    for (int t = 0; t < 4; ++t)
      for (int i = 0; i < 8; ++i) CHECK(moved[layer](t, i) == feats[layer](t, i));
}

TEST_CASE("encoder maps zero input to zero features (zero biases)") {
  TestGen tg = make_generator(1, 13);
  const Grid<double> zero(5, 1);
  const std::vector<Grid<double>> feats =
      encode<double>(tg.gen, std::span<const double>(tg.params.data()), zero);
  for (double v : feats[0].v) CHECK(v == 0.0);
}

TEST_CASE("teacher-forced decoding") {
  TestGen tg = make_generator(1, 21);
  std::mt19937_64 rng(22);
  const Grid<double> path = random_grid(6, 1, rng);
  const std::vector<Grid<double>> feats =
      encode<double>(tg.gen, std::span<const double>(tg.params.data()), path);

  SUBCASE("k = T-1 yields exactly one step") {
    const Grid<double> noise = random_grid(1, 2, rng);
    const Grid<double> out = decode_teacher_forced<double>(
        tg.gen, std::span<const double>(tg.params.data()), feats, path, noise, 5);
    CHECK(out.rows == 1);
    CHECK(out.cols == 1);
  }
  SUBCASE("zero readout weights give constant bias predictions") {
    TestGen frozen = make_generator(1, 23);
    const int hidden = frozen.gen.cfg.hidden;
    for (int i = 0; i < hidden; ++i) frozen.params.data()[frozen.gen.w_read + i] = 0.0;
    frozen.params.data()[frozen.gen.b_read] = 0.37;
    const Grid<double> noise = random_grid(3, 2, rng);
    const std::vector<Grid<double>> f2 =
        encode<double>(frozen.gen, std::span<const double>(frozen.params.data()), path);
    const Grid<double> out = decode_teacher_forced<double>(
        frozen.gen, std::span<const double>(frozen.params.data()), f2, path, noise, 3);
    for (double v : out.v) CHECK(v == 0.37);
  }
  SUBCASE("squared-error gradient matches finite differences") {
    const Grid<double> noise = random_grid(3, 2, rng);
    const auto plain = [&](std::span<const double> p) {
      const std::vector<Grid<double>> f = encode<double>(tg.gen, p, path);
      const Grid<double> out = decode_teacher_forced<double>(tg.gen, p, f, path, noise, 3);
      double loss = 0.0;
      for (int t = 0; t < out.rows; ++t) loss += (out(t, 0) - path(t + 3, 0)) * (out(t, 0) - path(t + 3, 0));
      return loss;
    };
    const TapeFn taped = [&](ad::Tape& tape, std::span<const ad::Value> p) {
      Grid<ad::Value> lp(path.rows, path.cols), ln(noise.rows, noise.cols);
      for (std::size_t i = 0; i < path.v.size(); ++i) lp.v[i] = tape.leaf(path.v[i]);
      for (std::size_t i = 0; i < noise.v.size(); ++i) ln.v[i] = tape.leaf(noise.v[i]);
      const std::vector<Grid<ad::Value>> f = encode<ad::Value>(tg.gen, p, lp);
      const Grid<ad::Value> out = decode_teacher_forced<ad::Value>(tg.gen, p, f, lp, ln, 3);
      ad::Value loss = tape.leaf(0.0);
      for (int t = 0; t < out.rows; ++t)
        loss = loss + ad::sqr(out(t, 0) - path(t + 3, 0));
      return loss;
    };
    const auto [value, grad] = forward_backward(taped, tg.params.data());
    CHECK(value == doctest::Approx(plain(tg.params.data())).epsilon(1e-12));
    std::uniform_int_distribution<std::size_t> pick(0, tg.params.data().size() - 1);
    for (int probe = 0; probe < 25; ++probe) {
      const std::size_t i = pick(rng);
      CHECK(grad_close(grad[i], central_diff(plain, tg.params.data(), i)));
    }
  }
  SUBCASE("perturbing a later observation leaves earlier predictions unchanged") {
    const Grid<double> noise = random_grid(3, 2, rng);
    const Grid<double> base = decode_teacher_forced<double>(
        tg.gen, std::span<const double>(tg.params.data()), feats, path, noise, 3);
    Grid<double> bumped = path;
    bumped(4, 0) += 2.0;  // affects predictions for steps 5.. only
    const std::vector<Grid<double>> f2 =
        encode<double>(tg.gen, std::span<const double>(tg.params.data()), bumped);
    const Grid<double> moved = decode_teacher_forced<double>(
        tg.gen, std::span<const double>(tg.params.data()), f2, bumped, noise, 3);
    CHECK(moved(0, 0) == base(0, 0));  // prediction for step 3 reads x_{0..2}
    CHECK(moved(1, 0) == base(1, 0));  // prediction for step 4 reads x_{0..3}
  }
}

TEST_CASE("autoregressive decoding") {
  TestGen tg = make_generator(1, 31);
  std::mt19937_64 rng(32);
  Matrix context(3, 1);
  context << 0.4, -0.2, 0.9;

  SUBCASE("zeroed noise columns make rollouts deterministic") {
    TestGen frozen = make_generator(1, 33);
    const Generator& gen = frozen.gen;
    const int hidden = gen.cfg.hidden;
    const int in_dim = gen.dec[0].in_dim;  // deepest features then noise
    for (int r = 0; r < hidden; ++r)
      for (int c = hidden; c < in_dim; ++c)
        frozen.params.data()[gen.dec[0].w + r * (in_dim + hidden) + c] = 0.0;
    Matrix noise_a(3, 2), noise_b(3, 2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 2; ++f) {
        noise_a(t, f) = u(rng);
        noise_b(t, f) = u(rng);
      }
    const Matrix a = decode_autoregressive(gen, frozen.params.data(), context, noise_a, 6);
    const Matrix b = decode_autoregressive(gen, frozen.params.data(), context, noise_b, 6);
    CHECK((a.array() == b.array()).all());
  }
  SUBCASE("first step agrees with teacher forcing under shared noise") {
    Matrix noise(3, 2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 2; ++f) noise(t, f) = u(rng);

    const Matrix ar = decode_autoregressive(tg.gen, tg.params.data(), context, noise, 6);

    Matrix full(6, 1);
    full.topRows(3) = context;
    full.bottomRows(3).setConstant(123.0);  // only steps before k may matter
    Grid<double> path(6, 1);
    for (int t = 0; t < 6; ++t) path(t, 0) = full(t, 0);
    Grid<double> noise_grid(3, 2);
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 2; ++f) noise_grid(t, f) = noise(t, f);
    const std::vector<Grid<double>> feats =
        encode<double>(tg.gen, std::span<const double>(tg.params.data()), path);
    const Grid<double> teacher = decode_teacher_forced<double>(
        tg.gen, std::span<const double>(tg.params.data()), feats, path, noise_grid, 3);
    CHECK(ar(0, 0) == teacher(0, 0));
  }
  SUBCASE("three-step rollout matches a hand-unrolled composition") {
    Matrix noise(3, 2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 2; ++f) noise(t, f) = u(rng);
    const Matrix rolled = decode_autoregressive(tg.gen, tg.params.data(), context, noise, 6);

    // unroll by hand with the same cell primitive
    const Generator& gen = tg.gen;
    std::span<const double> p(tg.params.data());
    std::vector<double> enc_state(8, 0.0), feat(8, 0.0), scratch;
    std::vector<double> s0(8, 0.0), s1(8, 0.0);
    double x_prev = 0.0;
    auto enc_step = [&](double x) {
      std::vector<double> in{x};
      detail::cell_step<double>(p, gen.enc[0].w, gen.enc[0].b, 1, 8,
                                std::span<const double>(in), enc_state, scratch);
      feat = enc_state;
    };
    for (int t = 0; t < 3; ++t) {
      x_prev = context(t, 0);
      enc_step(x_prev);
    }
    Matrix expect(3, 1);
    for (int t = 3; t < 6; ++t) {
      std::vector<double> in0 = feat;
      in0.push_back(noise(t - 3, 0));
      in0.push_back(noise(t - 3, 1));
      detail::cell_step<double>(p, gen.dec[0].w, gen.dec[0].b, gen.dec[0].in_dim, 8,
                                std::span<const double>(in0), s0, scratch);
      std::vector<double> in1{x_prev};
      in1.insert(in1.end(), s0.begin(), s0.end());
      detail::cell_step<double>(p, gen.dec[1].w, gen.dec[1].b, gen.dec[1].in_dim, 8,
                                std::span<const double>(in1), s1, scratch);
      double out = tg.params.data()[gen.b_read];
      for (int i = 0; i < 8; ++i) out += tg.params.data()[gen.w_read + i] * s1[i];
      expect(t - 3, 0) = out;
      x_prev = out;
      enc_step(x_prev);
    }
    CHECK((rolled.array() == expect.array()).all());
  }
}

TEST_CASE("checkpoint round trip") {
  TestGen tg = make_generator(2, 41, 6, 3, 1, 2);
  const std::string path = (std::filesystem::temp_directory_path() / "cotk_test.cotp").string();
  save_params(tg.params, path);
  const ParamVector loaded = load_params(path);
  REQUIRE(loaded.slices().size() == tg.params.slices().size());
  for (std::size_t i = 0; i < loaded.data().size(); ++i)
    CHECK(loaded.data()[i] == tg.params.data()[i]);

  TestGen fresh = make_generator(2, 1, 6, 3, 1, 2);
  copy_params_by_name(fresh.params, loaded);
  for (std::size_t i = 0; i < fresh.params.data().size(); ++i)
    CHECK(fresh.params.data()[i] == tg.params.data()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("load_params rejects other files") {
  const std::string path = (std::filesystem::temp_directory_path() / "cotk_bogus.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_params(path), IoError);
  std::filesystem::remove(path);
}
