#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff/matrix.hpp"

namespace taml::ad {

enum class Op {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,      // attr = constant factor
  AddScalar,  // attr = constant offset
  Pow,        // attr = constant exponent
  MatMul,
  Transpose,
  Exp,
  Log,
  LeakyRelu,  // attr = negative-side slope (0 gives ReLU)
  ClampMin,   // attr = floor
  Abs,
  Sum,
  SumRows,
  SumCols,
  Broadcast,      // aux = target shape
  BroadcastRows,  // aux.rows = row count
  BroadcastCols,  // aux.cols = column count
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "multiply";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Pow: return "power";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Exp: return "exponential";
    case Op::Log: return "logarithm";
    case Op::LeakyRelu: return "maximum_with_slope";
    case Op::ClampMin: return "clamp_min";
    case Op::Abs: return "absolute_value";
    case Op::Sum: return "sum";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::Broadcast: return "broadcast";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
  }
  return "unknown";
}

inline std::size_t op_arity(Op op) {
  switch (op) {
    case Op::Leaf:
    case Op::Constant: return 0;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::MatMul: return 2;
    default: return 1;
  }
}

inline constexpr std::size_t kNoInput = static_cast<std::size_t>(-1);

struct Node {
  Op op = Op::Constant;
  std::array<std::size_t, 2> inputs{kNoInput, kNoInput};
  double attr = 0.0;
  Shape aux{};
  Matrix value;
  bool requires_grad = false;
  // Recorded while differentiating with create_graph enabled.
  bool from_gradient = false;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Variable {
 public:
  Variable() = default;
  Variable(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Shape shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

namespace detail {

inline Shape infer_shape(Op op, std::span<const Shape> in, Shape aux) {
  auto fail = [&](const std::string& why) -> Shape {
    std::string msg = std::string(op_name(op)) + ": " + why + " (input shapes:";
    for (const auto& s : in) msg += " " + s.str();
    msg += ")";
    throw std::invalid_argument(msg);
  };
  if (in.size() != op_arity(op)) fail("expected " + std::to_string(op_arity(op)) + " inputs");
  switch (op) {
    case Op::Leaf:
    case Op::Constant: return aux;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
      if (in[0] != in[1]) fail("operands must have identical shapes");
      return in[0];
    case Op::MatMul:
      if (in[0].cols != in[1].rows) fail("inner dimensions differ");
      return {in[0].rows, in[1].cols};
    case Op::Transpose: return {in[0].cols, in[0].rows};
    case Op::Sum: return {1, 1};
    case Op::SumRows: return {1, in[0].cols};
    case Op::SumCols: return {in[0].rows, 1};
    case Op::Broadcast:
      if (in[0] != Shape{1, 1}) fail("broadcast source must be 1x1");
      return aux;
    case Op::BroadcastRows:
      if (in[0].rows != 1) fail("broadcast_rows source must have one row");
      return {aux.rows, in[0].cols};
    case Op::BroadcastCols:
      if (in[0].cols != 1) fail("broadcast_cols source must have one column");
      return {in[0].rows, aux.cols};
    default: return in[0];
  }
}

inline Matrix evaluate(Op op, double attr, Shape aux, const Matrix* a, const Matrix* b) {
  switch (op) {
    case Op::Add: return add(*a, *b);
    case Op::Sub: return sub(*a, *b);
    case Op::Mul: return mul(*a, *b);
    case Op::Scale: return scale(*a, attr);
    case Op::AddScalar: return add_scalar(*a, attr);
    case Op::Pow: return pow(*a, attr);
    case Op::MatMul: return matmul(*a, *b);
    case Op::Transpose: return transpose(*a);
    case Op::Exp: return exp(*a);
    case Op::Log: return log(*a);
    case Op::LeakyRelu: return leaky_relu(*a, attr);
    case Op::ClampMin: return clamp_min(*a, attr);
    case Op::Abs: return abs(*a);
    case Op::Sum: return sum(*a);
    case Op::SumRows: return sum_rows(*a);
    case Op::SumCols: return sum_cols(*a);
    case Op::Broadcast: return broadcast(*a, aux);
    case Op::BroadcastRows: return broadcast_rows(*a, aux.rows);
    case Op::BroadcastCols: return broadcast_cols(*a, aux.cols);
    case Op::Leaf:
    case Op::Constant: break;
  }
  throw std::logic_error("evaluate: no forward rule for " + std::string(op_name(op)));
}

}  // namespace detail

/// Append-only record of a computation. Node ids are topologically ordered:
/// every input id is smaller than the id of the node that consumes it.
/// A tape has a single writer; distinct tapes share nothing.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Variable leaf(Matrix value, bool requires_grad = true) {
    Node n;
    n.op = Op::Leaf;
    n.aux = value.shape();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Variable constant(Matrix value) {
    Node n;
    n.op = Op::Constant;
    n.aux = value.shape();
    n.value = std::move(value);
    return push(std::move(n));
  }

  Variable record(Op op, std::span<const Variable> inputs, double attr = 0.0, Shape aux = {}) {
    if (op == Op::Leaf || op == Op::Constant) {
      throw std::invalid_argument("record: use leaf() or constant() for source nodes");
    }
    if (inputs.size() != op_arity(op)) {
      throw std::invalid_argument(std::string(op_name(op)) + ": expected " + std::to_string(op_arity(op)) +
                                  " inputs, got " + std::to_string(inputs.size()));
    }
    std::array<Shape, 2> shapes{};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].tape() != this) {
        throw std::invalid_argument(std::string(op_name(op)) + ": input belongs to a different tape");
      }
      shapes[i] = nodes_[inputs[i].id()].value.shape();
    }
    detail::infer_shape(op, std::span<const Shape>(shapes.data(), inputs.size()), aux);

    Node n;
    n.op = op;
    n.attr = attr;
    n.aux = aux;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      n.inputs[i] = inputs[i].id();
      n.requires_grad = n.requires_grad || nodes_[inputs[i].id()].requires_grad;
    }
    n.value = detail::evaluate(op, attr, aux, input_value(n, 0), input_value(n, 1));
    n.from_gradient = recording_gradient_;
    return push(std::move(n));
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Re-evaluates every recorded node from its inputs and reports whether all
  /// cached primal values are reproduced bit for bit.
  bool replay_matches() const {
    for (const Node& n : nodes_) {
      if (n.op == Op::Leaf || n.op == Op::Constant) continue;
      const Matrix v = detail::evaluate(n.op, n.attr, n.aux, input_value(n, 0), input_value(n, 1));
      if (v.shape() != n.value.shape()) return false;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(v[i]) != std::bit_cast<std::uint64_t>(n.value[i])) return false;
      }
    }
    return true;
  }

  /// True when some node up to `last_id` was produced by a graph-recording
  /// backward pass and still depends on a differentiable leaf.
  bool has_differentiable_gradient_nodes(std::size_t last_id) const {
    for (std::size_t i = 0; i <= last_id && i < nodes_.size(); ++i) {
      if (nodes_[i].from_gradient && nodes_[i].requires_grad) return true;
    }
    return false;
  }

  class GradientRecordingScope {
   public:
    explicit GradientRecordingScope(Tape& t) : tape_(t), previous_(t.recording_gradient_) {
      t.recording_gradient_ = true;
    }
    ~GradientRecordingScope() { tape_.recording_gradient_ = previous_; }
    GradientRecordingScope(const GradientRecordingScope&) = delete;
    GradientRecordingScope& operator=(const GradientRecordingScope&) = delete;

   private:
    Tape& tape_;
    bool previous_;
  };

 private:
  Variable push(Node n) {
    nodes_.push_back(std::move(n));
    return Variable(this, nodes_.size() - 1);
  }

  const Matrix* input_value(const Node& n, std::size_t k) const {
    return n.inputs[k] == kNoInput ? nullptr : &nodes_[n.inputs[k]].value;
  }

  std::vector<Node> nodes_;
  bool recording_gradient_ = false;
};

inline const Matrix& Variable::value() const { return tape_->node(id_).value; }
inline bool Variable::requires_grad() const { return tape_->node(id_).requires_grad; }

// Recording front-ends. Same names as the Matrix kernels.

namespace detail {
inline Tape& tape_of(const Variable& v) {
  if (!v.valid()) throw std::invalid_argument("operation on an unbound Variable");
  return *v.tape();
}
inline Variable rec1(Op op, const Variable& a, double attr = 0.0, Shape aux = {}) {
  const std::array<Variable, 1> in{a};
  return tape_of(a).record(op, in, attr, aux);
}
inline Variable rec2(Op op, const Variable& a, const Variable& b) {
  const std::array<Variable, 2> in{a, b};
  return tape_of(a).record(op, in);
}
}  // namespace detail

inline Variable add(const Variable& a, const Variable& b) { return detail::rec2(Op::Add, a, b); }
inline Variable sub(const Variable& a, const Variable& b) { return detail::rec2(Op::Sub, a, b); }
inline Variable mul(const Variable& a, const Variable& b) { return detail::rec2(Op::Mul, a, b); }
inline Variable matmul(const Variable& a, const Variable& b) { return detail::rec2(Op::MatMul, a, b); }
inline Variable scale(const Variable& a, double c) { return detail::rec1(Op::Scale, a, c); }
inline Variable add_scalar(const Variable& a, double c) { return detail::rec1(Op::AddScalar, a, c); }
inline Variable pow(const Variable& a, double p) { return detail::rec1(Op::Pow, a, p); }
inline Variable exp(const Variable& a) { return detail::rec1(Op::Exp, a); }
inline Variable log(const Variable& a) { return detail::rec1(Op::Log, a); }
inline Variable abs(const Variable& a) { return detail::rec1(Op::Abs, a); }
inline Variable leaky_relu(const Variable& a, double slope) { return detail::rec1(Op::LeakyRelu, a, slope); }
inline Variable clamp_min(const Variable& a, double floor) { return detail::rec1(Op::ClampMin, a, floor); }
inline Variable transpose(const Variable& a) { return detail::rec1(Op::Transpose, a); }
inline Variable sum(const Variable& a) { return detail::rec1(Op::Sum, a); }
inline Variable sum_rows(const Variable& a) { return detail::rec1(Op::SumRows, a); }
inline Variable sum_cols(const Variable& a) { return detail::rec1(Op::SumCols, a); }
inline Variable broadcast(const Variable& a, Shape to) { return detail::rec1(Op::Broadcast, a, 0.0, to); }
inline Variable broadcast_rows(const Variable& a, std::size_t rows) {
  return detail::rec1(Op::BroadcastRows, a, 0.0, {rows, 0});
}
inline Variable broadcast_cols(const Variable& a, std::size_t cols) {
  return detail::rec1(Op::BroadcastCols, a, 0.0, {0, cols});
}

inline Variable mean(const Variable& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }
inline Matrix mean(const Matrix& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Constant copy of the primal value; gradients do not flow through it.
inline Variable stop_gradient(const Variable& a) { return detail::tape_of(a).constant(a.value()); }
inline Variable row_max(const Variable& a) { return detail::tape_of(a).constant(row_max(a.value())); }
inline const Matrix& value_of(const Variable& a) { return a.value(); }
/// Places a constant on the same tape as `like`.
inline Variable lift(const Variable& like, Matrix m) { return detail::tape_of(like).constant(std::move(m)); }

inline Variable operator+(const Variable& a, const Variable& b) { return add(a, b); }
inline Variable operator-(const Variable& a, const Variable& b) { return sub(a, b); }
inline Variable operator*(const Variable& a, const Variable& b) { return mul(a, b); }
inline Variable operator/(const Variable& a, const Variable& b) { return mul(a, pow(b, -1.0)); }
inline Variable operator-(const Variable& a) { return scale(a, -1.0); }
inline Variable operator+(const Variable& a, double c) { return add_scalar(a, c); }
inline Variable operator+(double c, const Variable& a) { return add_scalar(a, c); }
inline Variable operator-(const Variable& a, double c) { return add_scalar(a, -c); }
inline Variable operator-(double c, const Variable& a) { return add_scalar(scale(a, -1.0), c); }
inline Variable operator*(const Variable& a, double c) { return scale(a, c); }
inline Variable operator*(double c, const Variable& a) { return scale(a, c); }
inline Variable operator/(const Variable& a, double c) { return scale(a, 1.0 / c); }
inline Variable operator/(double c, const Variable& a) { return scale(pow(a, -1.0), c); }

}  // namespace taml::ad
