#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "cotk/core.hpp"
#include "cotk/io.hpp"

using namespace cotk;

namespace {

Path make_path(std::initializer_list<double> values) {
  Matrix v(static_cast<Eigen::Index>(values.size()), 1);
  int t = 0;
  for (double x : values) v(t++, 0) = x;
  return Path(v);
}

PathBatch random_batch(int m, int steps, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Path> paths;
  for (int i = 0; i < m; ++i) {
    Matrix v(steps, d);
    for (int t = 0; t < steps; ++t)
      for (int f = 0; f < d; ++f) v(t, f) = u(rng);
    paths.emplace_back(std::move(v));
  }
  return PathBatch(std::move(paths));
}

}  // namespace

TEST_CASE("ground_cost identity and hand values") {
  const Path x = make_path({0.3, -1.2, 0.5});
  CHECK(ground_cost(x, x) == 0.0);

  const Path a = make_path({0.0, 0.0});
  const Path b = make_path({1.0, 1.0});
  CHECK(ground_cost(a, b) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("ground_cost matches the elementwise summation oracle") {
  const PathBatch batch = random_batch(2, 3, 2, 42);
  const Path& x = batch[0];
  const Path& y = batch[1];
  double expected = 0.0;
  for (int t = 0; t < 3; ++t)
    for (int f = 0; f < 2; ++f) {
      const double diff = x.values()(t, f) - y.values()(t, f);
      expected += diff * diff;
    }
  CHECK(ground_cost(x, y) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ground_cost is symmetric and definite on random pairs") {
  const PathBatch batch = random_batch(12, 4, 3, 7);
  for (int i = 0; i < batch.size(); ++i)
    for (int j = 0; j < batch.size(); ++j) {
      const double cij = ground_cost(batch[i], batch[j]);
      CHECK(cij == ground_cost(batch[j], batch[i]));
      if (i == j)
        CHECK(cij == 0.0);
      else
        CHECK(cij > 0.0);
    }
}

TEST_CASE("ground_cost rejects shape mismatches") {
  const Path x = make_path({0.0, 1.0});
  const Path y = make_path({0.0, 1.0, 2.0});
  CHECK_THROWS_AS(ground_cost(x, y), DimensionError);
}

TEST_CASE("cost_matrix tabulates per-entry ground costs") {
  SUBCASE("single identical path") {
    const PathBatch one = random_batch(1, 2, 1, 3);
    const CostMatrix c = cost_matrix(one, one);
    CHECK(c.rows() == 1);
    CHECK(c.entries(0, 0) == 0.0);
  }
  SUBCASE("two one-step atoms") {
    std::vector<Path> xs;
    xs.push_back(Path(Matrix::Constant(1, 1, 0.0)));
    xs.push_back(Path(Matrix::Constant(1, 1, 1.0)));
    const PathBatch batch(xs);
    const CostMatrix c = cost_matrix(batch, batch);
    CHECK(c.entries(0, 0) == 0.0);
    CHECK(c.entries(0, 1) == 1.0);
    CHECK(c.entries(1, 0) == 1.0);
    CHECK(c.entries(1, 1) == 0.0);
  }
  SUBCASE("entry-wise oracle on random batches") {
    const PathBatch x = random_batch(4, 3, 2, 11);
    const PathBatch y = random_batch(3, 3, 2, 12);
    const CostMatrix c = cost_matrix(x, y);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) CHECK(c.entries(i, j) == ground_cost(x[i], y[j]));
  }
  SUBCASE("identical batches have zero diagonal") {
    const PathBatch x = random_batch(6, 3, 2, 13);
    const CostMatrix c = cost_matrix(x, x);
    for (int i = 0; i < 6; ++i) CHECK(c.entries(i, i) == 0.0);
  }
}

TEST_CASE("concat_condition reassembles splits bit-exactly") {
  const PathBatch batch = random_batch(1, 4, 2, 5);
  const Path& full = batch[0];
  for (int k = 1; k <= 3; ++k) {
    const Path context(Matrix(full.values().topRows(k)));
    const Path rest(Matrix(full.values().bottomRows(4 - k)));
    const Path glued = concat_condition(context, rest);
    CHECK(glued == full);
  }
}

TEST_CASE("concat_condition hand example") {
  const Path context = make_path({5, 6});
  const Path rest = make_path({7, 8});
  const Path glued = concat_condition(context, rest);
  CHECK(glued.steps() == 4);
  CHECK(glued.values()(0, 0) == 5);
  CHECK(glued.values()(3, 0) == 8);
}

TEST_CASE("concat_condition rejects feature mismatch") {
  const Path context = make_path({1.0});
  Matrix wide(1, 2);
  wide << 1.0, 2.0;
  CHECK_THROWS_AS(concat_condition(context, Path(wide)), DimensionError);
}

TEST_CASE("measure weights validate and renormalize") {
  const PathBatch atoms = random_batch(3, 2, 1, 9);
  Vector nearly(3);
  nearly << 0.3, 0.3, 0.4 + 4e-10;
  const DiscretePathMeasure mu(atoms, nearly);
  CHECK(mu.weights().sum() == doctest::Approx(1.0).epsilon(1e-13));

  Vector off(3);
  off << 0.3, 0.3, 0.5;
  CHECK_THROWS_AS(DiscretePathMeasure(atoms, off), DomainError);

  Vector negative(3);
  negative << -0.1, 0.6, 0.5;
  CHECK_THROWS_AS(DiscretePathMeasure(atoms, negative), DomainError);
}

TEST_CASE("path rejects non-finite entries") {
  Matrix bad(2, 1);
  bad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Path{bad}, DomainError);
}

TEST_CASE("batch rejects heterogeneous shapes") {
  std::vector<Path> mixed;
  mixed.push_back(make_path({1, 2}));
  mixed.push_back(make_path({1, 2, 3}));
  CHECK_THROWS_AS(PathBatch{mixed}, DimensionError);
}

TEST_CASE("csv round trip is exact") {
  const PathBatch batch = random_batch(3, 4, 2, 21);
  std::stringstream buf;
  write_batch_csv(batch, buf);
  const PathBatch back = read_batch_csv(buf);
  REQUIRE(back.size() == batch.size());
  for (int i = 0; i < batch.size(); ++i) CHECK(back[i] == batch[i]);
}

TEST_CASE("binary round trip is exact and rejects bad magic") {
  const PathBatch batch = random_batch(5, 3, 3, 22);
  std::stringstream buf;
  write_batch_binary(batch, buf);
  const PathBatch back = read_batch_binary(buf);
  REQUIRE(back.size() == batch.size());
  for (int i = 0; i < batch.size(); ++i) CHECK(back[i] == batch[i]);

  std::stringstream bogus("NOTAformat");
  CHECK_THROWS_AS(read_batch_binary(bogus), IoError);
}
