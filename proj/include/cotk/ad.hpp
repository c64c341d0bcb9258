#pragma once

// Reverse-mode differentiation on a flat tape. The primitive set is
// exactly what the adversarial objective needs: elementwise arithmetic,
// tanh/sigmoid/exp/log/abs/sqrt, and fused n-ary dot / sum / log-sum-exp
// so recurrent cells and Sinkhorn iterations stay compact on the tape.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cotk/types.hpp"

namespace cotk::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddConst,   // x + aux
  kMulConst,   // x * aux
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kAbs,
  kSqrt,
  kSqr,
  kSum,        // n-ary
  kDot,        // n-ary, two parallel operand spans
  kLogSumExp,  // n-ary
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kAddConst: return "add_const";
    case Op::kMulConst: return "mul_const";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kAbs: return "abs";
    case Op::kSqrt: return "sqrt";
    case Op::kSqr: return "sqr";
    case Op::kSum: return "sum";
    case Op::kDot: return "dot";
    case Op::kLogSumExp: return "logsumexp";
  }
  return "?";
}

struct Node {
  double val = 0.0;
  double adj = 0.0;
  std::int32_t a = -1;  // operand index, or arg-pool offset for n-ary ops
  std::int32_t b = -1;  // operand index, or arg count for n-ary ops
  double aux = 0.0;
  Op op = Op::kLeaf;
};

class Tape;

// Cheap handle into a tape node. Arithmetic on Values records onto the
// owning tape; mixing tapes is a programming error (asserted in debug).
class Value {
 public:
  Value() = default;
  Value(Tape* tape, std::int32_t idx) : tape_(tape), idx_(idx) {}
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return idx_; }
  inline double val() const;

 private:
  Tape* tape_ = nullptr;
  std::int32_t idx_ = -1;
};

class Tape {
 public:
  explicit Tape(std::size_t reserve_nodes = 0) {
    nodes_.reserve(reserve_nodes);
    args_.reserve(reserve_nodes);
  }

  // Drops all nodes but keeps capacity; call once per evaluation.
  void reset() {
    nodes_.clear();
    args_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

  Value leaf(double v) {
    if (!std::isfinite(v)) throw NumericalError("non-finite leaf value");
    Node n;
    n.val = v;
    nodes_.push_back(n);
    return Value(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  double val(std::int32_t i) const { return nodes_[i].val; }
  double grad(Value v) const { return nodes_[v.index()].adj; }

  Value unary(Op op, Value a, double result) {
    Node n;
    n.val = result;
    n.a = a.index();
    n.op = op;
    return push(n);
  }

  Value unary_aux(Op op, Value a, double aux, double result) {
    Node n;
    n.val = result;
    n.a = a.index();
    n.aux = aux;
    n.op = op;
    return push(n);
  }

  Value binary(Op op, Value a, Value b, double result) {
    Node n;
    n.val = result;
    n.a = a.index();
    n.b = b.index();
    n.op = op;
    return push(n);
  }

  Value nary(Op op, std::span<const Value> xs, double result) {
    Node n;
    n.val = result;
    n.a = static_cast<std::int32_t>(args_.size());
    n.b = static_cast<std::int32_t>(xs.size());
    n.op = op;
    for (const Value& v : xs) args_.push_back(v.index());
    return push(n);
  }

  // Two parallel spans stored back to back in the arg pool.
  Value dot_node(std::span<const Value> a, std::span<const Value> b, double result) {
    Node n;
    n.val = result;
    n.a = static_cast<std::int32_t>(args_.size());
    n.b = static_cast<std::int32_t>(a.size());
    n.op = Op::kDot;
    for (const Value& v : a) args_.push_back(v.index());
    for (const Value& v : b) args_.push_back(v.index());
    return push(n);
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. Adjoints of
  // earlier backward calls are cleared first.
  void backward(Value root) {
    for (Node& n : nodes_) n.adj = 0.0;
    nodes_[root.index()].adj = 1.0;
    for (std::int32_t i = root.index(); i >= 0; --i) {
      const Node& n = nodes_[i];
      const double g = n.adj;
      if (g == 0.0 && n.op != Op::kLeaf) continue;
      switch (n.op) {
        case Op::kLeaf:
          break;
        case Op::kAdd:
          nodes_[n.a].adj += g;
          nodes_[n.b].adj += g;
          break;
        case Op::kSub:
          nodes_[n.a].adj += g;
          nodes_[n.b].adj -= g;
          break;
        case Op::kMul:
          nodes_[n.a].adj += g * nodes_[n.b].val;
          nodes_[n.b].adj += g * nodes_[n.a].val;
          break;
        case Op::kDiv: {
          const double inv = 1.0 / nodes_[n.b].val;
          nodes_[n.a].adj += g * inv;
          nodes_[n.b].adj -= g * n.val * inv;
          break;
        }
        case Op::kNeg:
          nodes_[n.a].adj -= g;
          break;
        case Op::kAddConst:
          nodes_[n.a].adj += g;
          break;
        case Op::kMulConst:
          nodes_[n.a].adj += g * n.aux;
          break;
        case Op::kTanh:
          nodes_[n.a].adj += g * (1.0 - n.val * n.val);
          break;
        case Op::kSigmoid:
          nodes_[n.a].adj += g * n.val * (1.0 - n.val);
          break;
        case Op::kExp:
          nodes_[n.a].adj += g * n.val;
          break;
        case Op::kLog:
          nodes_[n.a].adj += g / nodes_[n.a].val;
          break;
        case Op::kAbs: {
          const double x = nodes_[n.a].val;
          // subgradient 0 at the kink
          nodes_[n.a].adj += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
          break;
        }
        case Op::kSqrt:
          // subgradient 0 at 0 (same convention as kAbs)
          if (n.val > 0.0) nodes_[n.a].adj += g * 0.5 / n.val;
          break;
        case Op::kSqr:
          nodes_[n.a].adj += g * 2.0 * nodes_[n.a].val;
          break;
        case Op::kSum:
          for (std::int32_t k = 0; k < n.b; ++k) nodes_[args_[n.a + k]].adj += g;
          break;
        case Op::kDot:
          for (std::int32_t k = 0; k < n.b; ++k) {
            const std::int32_t ia = args_[n.a + k];
            const std::int32_t ib = args_[n.a + n.b + k];
            nodes_[ia].adj += g * nodes_[ib].val;
            nodes_[ib].adj += g * nodes_[ia].val;
          }
          break;
        case Op::kLogSumExp:
          for (std::int32_t k = 0; k < n.b; ++k) {
            const std::int32_t ia = args_[n.a + k];
            nodes_[ia].adj += g * std::exp(nodes_[ia].val - n.val);
          }
          break;
      }
    }
  }

 private:
  Value push(const Node& n) {
    if (!std::isfinite(n.val))
      throw NumericalError(std::string("non-finite value from primitive ") + op_name(n.op),
                           static_cast<long>(nodes_.size()));
    nodes_.push_back(n);
    return Value(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  std::vector<std::int32_t> args_;
};

inline double Value::val() const { return tape_->val(idx_); }

inline Value operator+(Value a, Value b) {
  return a.tape()->binary(Op::kAdd, a, b, a.val() + b.val());
}
inline Value operator-(Value a, Value b) {
  return a.tape()->binary(Op::kSub, a, b, a.val() - b.val());
}
inline Value operator*(Value a, Value b) {
  return a.tape()->binary(Op::kMul, a, b, a.val() * b.val());
}
inline Value operator/(Value a, Value b) {
  return a.tape()->binary(Op::kDiv, a, b, a.val() / b.val());
}
inline Value operator-(Value a) { return a.tape()->unary(Op::kNeg, a, -a.val()); }

inline Value operator+(Value a, double c) {
  return a.tape()->unary_aux(Op::kAddConst, a, c, a.val() + c);
}
inline Value operator+(double c, Value a) { return a + c; }
inline Value operator-(Value a, double c) { return a + (-c); }
inline Value operator-(double c, Value a) {
  Value neg = a.tape()->unary_aux(Op::kMulConst, a, -1.0, -a.val());
  return neg + c;
}
inline Value operator*(Value a, double c) {
  return a.tape()->unary_aux(Op::kMulConst, a, c, a.val() * c);
}
inline Value operator*(double c, Value a) { return a * c; }
inline Value operator/(Value a, double c) { return a * (1.0 / c); }

inline Value tanh(Value a) { return a.tape()->unary(Op::kTanh, a, std::tanh(a.val())); }
inline Value sigmoid(Value a) {
  return a.tape()->unary(Op::kSigmoid, a, 1.0 / (1.0 + std::exp(-a.val())));
}
inline Value exp(Value a) { return a.tape()->unary(Op::kExp, a, std::exp(a.val())); }
inline Value log(Value a) {
  if (a.val() <= 0.0) throw NumericalError("log of nonpositive value");
  return a.tape()->unary(Op::kLog, a, std::log(a.val()));
}
inline Value abs(Value a) { return a.tape()->unary(Op::kAbs, a, std::abs(a.val())); }
inline Value sqrt(Value a) {
  if (a.val() < 0.0) throw NumericalError("sqrt of negative value");
  return a.tape()->unary(Op::kSqrt, a, std::sqrt(a.val()));
}
inline Value sqr(Value a) { return a.tape()->unary(Op::kSqr, a, a.val() * a.val()); }

inline Value sum(std::span<const Value> xs) {
  double s = 0.0;
  for (const Value& v : xs) s += v.val();
  return xs[0].tape()->nary(Op::kSum, xs, s);
}

inline Value dot(std::span<const Value> a, std::span<const Value> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i].val() * b[i].val();
  return a[0].tape()->dot_node(a, b, s);
}

inline Value logsumexp(std::span<const Value> xs) {
  double mx = xs[0].val();
  for (const Value& v : xs) mx = std::max(mx, v.val());
  double s = 0.0;
  for (const Value& v : xs) s += std::exp(v.val() - mx);
  return xs[0].tape()->nary(Op::kLogSumExp, xs, mx + std::log(s));
}

}  // namespace cotk::ad

namespace cotk::scalar {

// double overloads so numeric kernels can be written once and
// instantiated for plain evaluation or for the tape.
inline double tanh(double x) { return std::tanh(x); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double abs(double x) { return std::abs(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double sqr(double x) { return x * x; }

inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double v : xs) s += v;
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double logsumexp(std::span<const double> xs) {
  double mx = xs[0];
  for (double v : xs) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : xs) s += std::exp(v - mx);
  return mx + std::log(s);
}

using cotk::ad::abs;
using cotk::ad::dot;
using cotk::ad::exp;
using cotk::ad::log;
using cotk::ad::logsumexp;
using cotk::ad::sigmoid;
using cotk::ad::sqr;
using cotk::ad::sqrt;
using cotk::ad::sum;
using cotk::ad::tanh;

}  // namespace cotk::scalar
