#pragma once

#include "flowrec/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flowrec {

/// Mean absolute error over masked nodes, both velocity components.
double mae(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask);
/// Root of the masked mean squared error (same averaging as mae).
double rmse(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask);
/// Coefficient of determination of the velocity magnitudes on the mask.
double r2(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask);

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  // Mean absolute component error of each scored node, in mask order.
  std::vector<double> per_node_abs_error;
  std::size_t n_eval = 0;
  std::string method;
  std::string snapshot;
};

/// Scores a prediction; throws ErrorCode::internal if mae > rmse.
MetricsReport make_report(const Matrix& pred, const Matrix& target,
                          const std::vector<std::uint8_t>& eval_mask, std::string method,
                          std::string snapshot);

}  // namespace flowrec
