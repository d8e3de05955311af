#include "flowrec/metrics.hpp"

#include <cmath>

namespace flowrec {

namespace {

void check_inputs(const char* what, const Matrix& pred, const Matrix& target,
                  const std::vector<std::uint8_t>& eval_mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    fail(ErrorCode::shape_mismatch, std::string(what) + ": prediction and target shapes differ");
  }
  if (static_cast<Eigen::Index>(eval_mask.size()) != pred.rows()) {
    fail(ErrorCode::shape_mismatch, std::string(what) + ": mask length differs from node count");
  }
  for (auto m : eval_mask) {
    if (m) return;
  }
  fail(ErrorCode::empty_mask, std::string(what) + ": empty evaluation mask");
}

}  // namespace

double mae(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask) {
  check_inputs("mae", pred, target, eval_mask);
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!eval_mask[i]) continue;
    total += (pred.row(i) - target.row(i)).cwiseAbs().sum();
    count += pred.cols();
  }
  return total / static_cast<double>(count);
}

double rmse(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask) {
  check_inputs("rmse", pred, target, eval_mask);
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!eval_mask[i]) continue;
    total += (pred.row(i) - target.row(i)).squaredNorm();
    count += pred.cols();
  }
  return std::sqrt(total / static_cast<double>(count));
}

double r2(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask) {
  check_inputs("r2", pred, target, eval_mask);
  double mean = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!eval_mask[i]) continue;
    mean += target.row(i).norm();
    ++count;
  }
  mean /= static_cast<double>(count);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!eval_mask[i]) continue;
    const double t = target.row(i).norm();
    const double p = pred.row(i).norm();
    ss_res += (t - p) * (t - p);
    ss_tot += (t - mean) * (t - mean);
  }
  // Rounding in the mean leaves a tiny residue for constant magnitudes.
  if (!(ss_tot > 1e-24 * static_cast<double>(count) * (mean * mean + 1.0))) fail(ErrorCode::zero_variance, "r2: target magnitudes have zero variance");
  return 1.0 - ss_res / ss_tot;
}

MetricsReport make_report(const Matrix& pred, const Matrix& target,
                          const std::vector<std::uint8_t>& eval_mask, std::string method,
                          std::string snapshot) {
  MetricsReport rep;
  rep.mae = mae(pred, target, eval_mask);
  rep.rmse = rmse(pred, target, eval_mask);
  rep.r2 = r2(pred, target, eval_mask);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!eval_mask[i]) continue;
    rep.per_node_abs_error.push_back((pred.row(i) - target.row(i)).cwiseAbs().mean());
  }
  rep.n_eval = rep.per_node_abs_error.size();
  rep.method = std::move(method);
  rep.snapshot = std::move(snapshot);
  if (rep.mae > rep.rmse * (1.0 + 1e-12)) {
    fail(ErrorCode::internal, "metrics report violates mae <= rmse");
  }
  return rep;
}

}  // namespace flowrec
