#include "flowrec/losses.hpp"

#include <cmath>

namespace flowrec {

double mse_loss(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    fail(ErrorCode::shape_mismatch, "mse_loss: prediction and target shapes differ");
  }
  if (static_cast<Eigen::Index>(eval_mask.size()) != pred.rows()) {
    fail(ErrorCode::shape_mismatch, "mse_loss: mask length differs from node count");
  }
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!eval_mask[i]) continue;
    total += (pred.row(i) - target.row(i)).squaredNorm();
    ++count;
  }
  if (count == 0) fail(ErrorCode::empty_mask, "mse_loss: empty evaluation mask");
  return total / static_cast<double>(count * pred.cols());
}

double tv_loss(const Matrix& field) {
  const auto p = field.rows();
  const auto q = field.cols();
  if (p < 1 || q < 1) fail(ErrorCode::invalid_argument, "tv_loss: empty grid");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      if (i + 1 < p) total += std::abs(field(i + 1, j) - field(i, j));
      if (j + 1 < q) total += std::abs(field(i, j + 1) - field(i, j));
    }
  }
  return 2.0 * total / static_cast<double>(p * q);
}

double total_loss(double mse, double tv, double alpha_tv) { return mse + alpha_tv * tv; }

}  // namespace flowrec
