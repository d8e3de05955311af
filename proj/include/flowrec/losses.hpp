#pragma once

#include "flowrec/types.hpp"

#include <cstdint>
#include <vector>

namespace flowrec {

/// Mean over masked nodes and both components of the squared error.
double mse_loss(const Matrix& pred, const Matrix& target, const std::vector<std::uint8_t>& eval_mask);

/// (2/N) * sum of absolute forward differences along both grid axes, N = p*q.
/// Differences that would leave the grid are skipped.
double tv_loss(const Matrix& field);

/// mse + alpha_tv * tv.
double total_loss(double mse, double tv, double alpha_tv);

}  // namespace flowrec
