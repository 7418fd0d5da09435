#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff/matrix.hpp"
#include "taml/autodiff/tape.hpp"

namespace taml::ad {

/// Flat gradient aligned to the order of the parameters it was taken against.
struct GradientVector {
  std::vector<double> values;
  // Set when some requested parameter did not live on the loss's tape; its
  // entries are zero.
  bool detached_parameters = false;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

namespace detail {

struct NodeInfo {
  Op op;
  double attr;
  Shape aux;
  Shape in0_shape;
};

inline Matrix relu_mask(const Matrix& a, double slope) {
  return map(a, [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}
inline Matrix floor_mask(const Matrix& a, double floor) {
  return map(a, [floor](double x) { return x > floor ? 1.0 : 0.0; });
}
inline Matrix sign_mask(const Matrix& a) {
  // Subgradient 0 at the kink.
  return map(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

/// Vector-Jacobian product of one node. Written once over T so the same rule
/// evaluates numerically (T = Matrix) or records itself on the tape
/// (T = Variable), which is what makes gradients differentiable.
/// `a_val` is the primal of input 0 and must be read before anything is
/// appended to the tape.
template <class T, class Emit>
void vjp(const NodeInfo& n, const T& a, const T* b, const T& out, const T& g, const Matrix& a_val, Emit&& emit) {
  switch (n.op) {
    case Op::Add:
      emit(0, g);
      emit(1, g);
      return;
    case Op::Sub:
      emit(0, g);
      emit(1, scale(g, -1.0));
      return;
    case Op::Mul:
      emit(0, mul(g, *b));
      emit(1, mul(g, a));
      return;
    case Op::Scale: emit(0, scale(g, n.attr)); return;
    case Op::AddScalar: emit(0, g); return;
    case Op::Pow:
      if (n.attr == 1.0) {
        emit(0, g);
      } else {
        emit(0, mul(g, scale(pow(a, n.attr - 1.0), n.attr)));
      }
      return;
    case Op::MatMul:
      emit(0, matmul(g, transpose(*b)));
      emit(1, matmul(transpose(a), g));
      return;
    case Op::Transpose: emit(0, transpose(g)); return;
    case Op::Exp: emit(0, mul(g, out)); return;
    case Op::Log: emit(0, mul(g, pow(a, -1.0))); return;
    case Op::LeakyRelu: {
      Matrix m = relu_mask(a_val, n.attr);
      emit(0, mul(g, lift(a, std::move(m))));
      return;
    }
    case Op::ClampMin: {
      Matrix m = floor_mask(a_val, n.attr);
      emit(0, mul(g, lift(a, std::move(m))));
      return;
    }
    case Op::Abs: {
      Matrix m = sign_mask(a_val);
      emit(0, mul(g, lift(a, std::move(m))));
      return;
    }
    case Op::Sum: emit(0, broadcast(g, n.in0_shape)); return;
    case Op::SumRows: emit(0, broadcast_rows(g, n.in0_shape.rows)); return;
    case Op::SumCols: emit(0, broadcast_cols(g, n.in0_shape.cols)); return;
    case Op::Broadcast: emit(0, sum(g)); return;
    case Op::BroadcastRows: emit(0, sum_rows(g)); return;
    case Op::BroadcastCols: emit(0, sum_cols(g)); return;
    case Op::Leaf:
    case Op::Constant: return;
  }
}

inline void require_scalar_loss(const Variable& loss) {
  if (!loss.valid()) throw std::invalid_argument("backward: loss is not bound to a tape");
  if (!loss.value().is_scalar()) {
    throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " + loss.shape().str());
  }
}

/// Smallest node id among the targets on `tape`; nodes at or below it
/// cannot contribute to their adjoints.
inline std::size_t sweep_floor(const Tape& tape, std::span<const Variable> wrt) {
  std::size_t low = static_cast<std::size_t>(-1);
  for (const Variable& w : wrt) {
    if (w.tape() == &tape && w.id() < low) low = w.id();
  }
  return low == static_cast<std::size_t>(-1) ? 0 : low;
}

inline NodeInfo info_of(const Tape& tape, const Node& n) {
  Shape in0{};
  if (n.inputs[0] != kNoInput) in0 = tape.node(n.inputs[0]).value.shape();
  return {n.op, n.attr, n.aux, in0};
}

/// Numeric reverse sweep. Leaves the tape untouched.
inline std::vector<Matrix> adjoints(const Variable& loss, std::span<const Variable> wrt, bool& detached) {
  require_scalar_loss(loss);
  const Tape& tape = *loss.tape();
  const std::size_t top = loss.id();
  std::vector<Matrix> adj(top + 1);
  std::vector<char> has(top + 1, 0);
  adj[top] = Matrix(1, 1, 1.0);
  has[top] = 1;
  const std::size_t low = sweep_floor(tape, wrt);

  for (std::size_t i = top + 1; i-- > low + 1;) {
    if (!has[i]) continue;
    const Node& n = tape.node(i);
    if (!n.requires_grad || n.op == Op::Leaf || n.op == Op::Constant) continue;
    const Matrix& a = tape.node(n.inputs[0]).value;
    const Matrix* b = n.inputs[1] == kNoInput ? nullptr : &tape.node(n.inputs[1]).value;
    vjp<Matrix>(info_of(tape, n), a, b, n.value, adj[i], a, [&](std::size_t k, Matrix g) {
      const std::size_t src = n.inputs[k];
      if (!tape.node(src).requires_grad) return;
      if (has[src]) {
        auto dst = adj[src].values();
        auto add_from = g.values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += add_from[j];
      } else {
        adj[src] = std::move(g);
        has[src] = 1;
      }
    });
  }

  std::vector<Matrix> out;
  out.reserve(wrt.size());
  detached = false;
  for (const Variable& w : wrt) {
    if (w.tape() != loss.tape()) {
      detached = true;
      out.emplace_back(w.valid() ? w.shape() : Shape{0, 0});
    } else if (w.id() <= top && has[w.id()]) {
      out.push_back(adj[w.id()]);
    } else {
      out.emplace_back(w.shape());
    }
  }
  return out;
}

inline GradientVector flatten(const std::vector<Matrix>& parts, bool detached) {
  GradientVector g;
  g.detached_parameters = detached;
  for (const Matrix& m : parts) g.values.insert(g.values.end(), m.values().begin(), m.values().end());
  return g;
}

}  // namespace detail

/// d loss / d p for every p in `wrt`, one matrix per parameter.
inline std::vector<Matrix> backward_tensors(const Variable& loss, std::span<const Variable> wrt) {
  bool detached = false;
  return detail::adjoints(loss, wrt, detached);
}

/// d loss / d p flattened in parameter order. The tape is not modified.
inline GradientVector backward(const Variable& loss, std::span<const Variable> wrt) {
  bool detached = false;
  auto parts = detail::adjoints(loss, wrt, detached);
  return detail::flatten(parts, detached);
}

/// Gradient of `loss` as new tape Variables. With `create_graph` the reverse
/// sweep is itself recorded, so the result can be differentiated again.
/// Without it the gradient is returned as constants (stop-gradient), which
/// is how first-order adaptation drops the inner Jacobian.
inline std::vector<Variable> grad(const Variable& loss, std::span<const Variable> wrt, bool create_graph = true) {
  detail::require_scalar_loss(loss);
  Tape& tape = *loss.tape();
  for (const Variable& w : wrt) {
    if (w.tape() != &tape) throw std::invalid_argument("grad: parameter belongs to a different tape");
  }

  if (!create_graph) {
    std::vector<Variable> out;
    for (Matrix& m : backward_tensors(loss, wrt)) out.push_back(tape.constant(std::move(m)));
    return out;
  }

  Tape::GradientRecordingScope scope(tape);
  const std::size_t top = loss.id();
  std::vector<Variable> adj(top + 1);
  std::vector<char> has(top + 1, 0);
  adj[top] = tape.constant(Matrix(1, 1, 1.0));
  has[top] = 1;
  const std::size_t low = detail::sweep_floor(tape, wrt);

  for (std::size_t i = top + 1; i-- > low + 1;) {
    if (!has[i]) continue;
    // Copy what we need: recording below may reallocate the node storage.
    const Node& n = tape.node(i);
    if (!n.requires_grad || n.op == Op::Leaf || n.op == Op::Constant) continue;
    const detail::NodeInfo info = detail::info_of(tape, n);
    const std::array<std::size_t, 2> ins = n.inputs;
    const Variable a(&tape, ins[0]);
    const Variable b(&tape, ins[1] == kNoInput ? 0 : ins[1]);
    const Variable out_v(&tape, i);
    const Variable g = adj[i];
    const Matrix& a_val = tape.node(ins[0]).value;
    detail::vjp<Variable>(info, a, ins[1] == kNoInput ? nullptr : &b, out_v, g, a_val,
                          [&](std::size_t k, Variable gk) {
                            const std::size_t src = ins[k];
                            if (!tape.node(src).requires_grad) return;
                            if (has[src]) {
                              adj[src] = add(adj[src], gk);
                            } else {
                              adj[src] = gk;
                              has[src] = 1;
                            }
                          });
  }

  std::vector<Variable> out;
  out.reserve(wrt.size());
  for (const Variable& w : wrt) {
    if (w.id() <= top && has[w.id()]) {
      out.push_back(adj[w.id()]);
    } else {
      out.push_back(tape.constant(Matrix(w.shape())));
    }
  }
  return out;
}

/// Meta-gradient of a loss that was built from recorded gradients (for
/// example theta - alpha * grad(L)). Differentiates through those gradient
/// nodes, giving the full second-order result.
inline GradientVector backward_through_gradient(const Variable& outer_loss, std::span<const Variable> wrt) {
  detail::require_scalar_loss(outer_loss);
  if (!outer_loss.tape()->has_differentiable_gradient_nodes(outer_loss.id())) {
    throw std::logic_error(
        "backward_through_gradient: the tape holds no differentiable gradient nodes; "
        "compute inner gradients with grad(..., create_graph = true) to enable gradient recording");
  }
  return backward(outer_loss, wrt);
}

}  // namespace taml::ad
