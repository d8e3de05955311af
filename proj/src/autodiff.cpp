#include "flowrec/autodiff.hpp"

#include <cmath>

namespace flowrec::ad {

Var Tape::leaf(Matrix value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Var Tape::push(Matrix value, bool requires_grad, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix Tape::grad(Var v) const {
  const auto& node = nodes_[v.id];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Tape::accumulate(Var v, Matrix&& g) {
  auto& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = std::move(g);
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) {
    fail(ErrorCode::shape_mismatch, "backward() without a seed needs a scalar output");
  }
  backward(output, Matrix::Ones(1, 1));
}

void Tape::backward(Var output, const Matrix& seed) {
  for (auto& node : nodes_) node.grad.resize(0, 0);
  accumulate(output, seed);
  for (int id = output.id; id >= 0; --id) {
    auto& node = nodes_[id];
    if (!node.backprop || node.grad.size() == 0) continue;
    // Closures only accumulate into lower ids, so the slot can be released.
    const Matrix g = std::move(node.grad);
    node.grad.resize(0, 0);
    node.backprop(*this, g);
  }
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::shape_mismatch, std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) fail(ErrorCode::shape_mismatch, "matmul: inner dimensions differ");
  Matrix out = av * bv;
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tape, const Matrix& g) {
                  if (tape.requires_grad(a)) tape.accumulate_expr(a, g * tape.value(b).transpose());
                  if (tape.requires_grad(b)) tape.accumulate_expr(b, tape.value(a).transpose() * g);
                });
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.push(t.value(a) + t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tape, const Matrix& g) {
                  tape.accumulate(a, g);
                  tape.accumulate(b, g);
                });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.push(t.value(a) - t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tape, const Matrix& g) {
                  tape.accumulate(a, g);
                  tape.accumulate_expr(b, -g);
                });
}

Var add_bias(Tape& t, Var a, Var bias) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    fail(ErrorCode::shape_mismatch, "add_bias: bias must be 1 x F");
  }
  Matrix out = av.rowwise() + bv.row(0);
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(bias),
                [a, bias](Tape& tape, const Matrix& g) {
                  tape.accumulate(a, g);
                  if (tape.requires_grad(bias)) tape.accumulate_expr(bias, g.colwise().sum());
                });
}

Var elu(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out(x.rows(), x.cols());
  Matrix slope(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    const double yi = elu(xi);
    out.data()[i] = yi;
    slope.data()[i] = xi > 0.0 ? 1.0 : yi + 1.0;
  }
  return t.push(std::move(out), t.requires_grad(a),
                [a, slope = std::move(slope)](Tape& tape, const Matrix& g) {
                  tape.accumulate(a, g.cwiseProduct(slope));
                });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Matrix slope = out.unaryExpr([](double y) { return y * (1.0 - y); });
  return t.push(std::move(out), t.requires_grad(a),
                [a, slope = std::move(slope)](Tape& tape, const Matrix& g) {
                  tape.accumulate_expr(a, g.cwiseProduct(slope));
                });
}

Var scale(Tape& t, Var a, Var s) {
  if (t.value(s).size() != 1) fail(ErrorCode::shape_mismatch, "scale: factor must be 1x1");
  const double factor = t.value(s)(0, 0);
  return t.push(factor * t.value(a), t.requires_grad(a) || t.requires_grad(s),
                [a, s, factor](Tape& tape, const Matrix& g) {
                  if (tape.requires_grad(a)) tape.accumulate_expr(a, factor * g);
                  if (tape.requires_grad(s)) {
                    Matrix ds(1, 1);
                    ds(0, 0) = g.cwiseProduct(tape.value(a)).sum();
                    tape.accumulate(s, ds);
                  }
                });
}

Matrix sparse_times(const SparseMatrix& s, const Matrix& x) {
  const auto f = x.cols();
  Matrix out = Matrix::Zero(s.rows(), f);
  for (Eigen::Index i = 0; i < s.outerSize(); ++i) {
    double* o = out.row(i).data();
    for (SparseMatrix::InnerIterator it(s, i); it; ++it) {
      const double v = it.value();
      const double* xr = x.row(it.col()).data();
      for (Eigen::Index c = 0; c < f; ++c) o[c] += v * xr[c];
    }
  }
  return out;
}

Matrix sparse_transpose_times(const SparseMatrix& s, const Matrix& g) {
  // Scatter rows instead of forming the column-major transpose product.
  const auto f = g.cols();
  Matrix out = Matrix::Zero(s.cols(), f);
  for (Eigen::Index i = 0; i < s.outerSize(); ++i) {
    const double* gi = g.row(i).data();
    for (SparseMatrix::InnerIterator it(s, i); it; ++it) {
      const double v = it.value();
      double* o = out.row(it.col()).data();
      for (Eigen::Index c = 0; c < f; ++c) o[c] += v * gi[c];
    }
  }
  return out;
}

Var spmm(Tape& t, const SparseMatrix& s, Var a) {
  if (s.cols() != t.value(a).rows()) fail(ErrorCode::shape_mismatch, "spmm: size mismatch");
  return t.push(sparse_times(s, t.value(a)), t.requires_grad(a), [&s, a](Tape& tape, const Matrix& g) {
    tape.accumulate(a, sparse_transpose_times(s, g));
  });
}

Var masked_mse(Tape& t, Var pred, const Matrix& target, const std::vector<std::uint8_t>& mask) {
  const Matrix& p = t.value(pred);
  check_same_shape(p, target, "masked_mse");
  if (static_cast<Eigen::Index>(mask.size()) != p.rows()) {
    fail(ErrorCode::shape_mismatch, "masked_mse: mask length differs from rows");
  }
  Eigen::Index count = 0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (!mask[i]) continue;
    ++count;
    total += (p.row(i) - target.row(i)).squaredNorm();
  }
  if (count == 0) fail(ErrorCode::empty_mask, "masked_mse: empty mask");
  const double denom = static_cast<double>(count * p.cols());
  Matrix out(1, 1);
  out(0, 0) = total / denom;
  return t.push(std::move(out), t.requires_grad(pred),
                [pred, target, mask, denom](Tape& tape, const Matrix& g) {
                  const Matrix& pv = tape.value(pred);
                  Matrix d = Matrix::Zero(pv.rows(), pv.cols());
                  const double factor = 2.0 * g(0, 0) / denom;
                  for (Eigen::Index i = 0; i < pv.rows(); ++i) {
                    if (mask[i]) d.row(i) = factor * (pv.row(i) - target.row(i));
                  }
                  tape.accumulate(pred, d);
                });
}

}  // namespace flowrec::ad
