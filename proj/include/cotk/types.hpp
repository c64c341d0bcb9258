#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Shape disagreement between operands (T, d or atom counts).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Values outside an operation's domain (negative weights, non-finite input).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Breakdown at runtime: overflow in an iteration, solver failure.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg, long iteration = -1)
      : std::runtime_error(msg), iteration(iteration) {}
  long iteration;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg, int line = -1)
      : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line(line) {}
  int line;
};

// One sequence: rows are time steps, columns are features.
class Path {
 public:
  explicit Path(Matrix values);

  int steps() const { return static_cast<int>(values_.rows()); }
  int features() const { return static_cast<int>(values_.cols()); }
  const Matrix& values() const { return values_; }

  // First `t` time steps as a view (t in [1, T]).
  Eigen::Block<const Matrix> prefix(int t) const { return values_.topRows(t); }

  bool operator==(const Path& other) const {
    return values_.rows() == other.values_.rows() &&
           (values_.array() == other.values_.array()).all();
  }

 private:
  Matrix values_;
};

// Homogeneous collection of paths; the unit a mini-batch is made of.
class PathBatch {
 public:
  explicit PathBatch(std::vector<Path> paths);

  int size() const { return static_cast<int>(paths_.size()); }
  int steps() const { return paths_.front().steps(); }
  int features() const { return paths_.front().features(); }
  const Path& operator[](int i) const { return paths_[i]; }
  const std::vector<Path>& paths() const { return paths_; }

 private:
  std::vector<Path> paths_;
};

// Weighted finite set of paths. Raw empirical measures carry uniform
// weights; smoothed and reweighted variants reuse the same type.
class DiscretePathMeasure {
 public:
  // Weights must be nonnegative and sum to 1 within 1e-9; they are
  // renormalized so the stored sum is exact to 1e-12.
  DiscretePathMeasure(PathBatch atoms, Vector weights);

  // Uniform 1/m weights.
  static DiscretePathMeasure uniform(PathBatch atoms);

  int size() const { return atoms_.size(); }
  int steps() const { return atoms_.steps(); }
  int features() const { return atoms_.features(); }
  const PathBatch& atoms() const { return atoms_; }
  const Vector& weights() const { return weights_; }

 private:
  PathBatch atoms_;
  Vector weights_;
};

// Pairwise transport costs between two atom sets.
struct CostMatrix {
  Matrix entries;
  std::string cost_id;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }
};

}  // namespace cotk
