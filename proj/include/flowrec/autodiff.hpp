#pragma once

#include "flowrec/types.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace flowrec::ad {

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. Every op appends one node holding
/// its forward value and a closure that pushes the node's gradient into its
/// inputs; backward() replays the closures in reverse creation order.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& grad)>;

  Var leaf(Matrix value, bool requires_grad = false);

  /// Records an op result. `backprop` is dropped when requires_grad is false.
  Var push(Matrix value, bool requires_grad, Backprop backprop);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulated into v by the last backward(); zeros when v was
  /// not reached.
  Matrix grad(Var v) const;

  /// Adds g into the gradient slot of v (no-op unless v requires grad).
  void accumulate(Var v, const Matrix& g);
  void accumulate(Var v, Matrix&& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g) {
    if (!nodes_[v.id].requires_grad) return;
    auto& slot = nodes_[v.id].grad;
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  }

  /// Seeds a 1x1 output with 1 and back-propagates.
  void backward(Var output);
  void backward(Var output, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
/// a + 1_n * bias, bias is 1 x F.
Var add_bias(Tape& t, Var a, Var bias);
Var elu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
/// s * a with s a 1x1 value.
Var scale(Tape& t, Var a, Var s);
/// Row-scatter kernels behind spmm.
Matrix sparse_times(const SparseMatrix& s, const Matrix& x);
Matrix sparse_transpose_times(const SparseMatrix& s, const Matrix& g);

/// S * a for a constant sparse S; S must outlive the tape's backward pass.
Var spmm(Tape& t, const SparseMatrix& s, Var a);
/// Mean over masked rows and all columns of (pred - target)^2, as 1x1.
Var masked_mse(Tape& t, Var pred, const Matrix& target, const std::vector<std::uint8_t>& mask);

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double leaky_relu(double x, double slope = 0.2) { return x > 0.0 ? x : slope * x; }

}  // namespace flowrec::ad
