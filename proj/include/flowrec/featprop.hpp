#pragma once

#include "flowrec/graph.hpp"
#include "flowrec/sparsify.hpp"

#include <functional>

namespace flowrec {

struct PropagationOptions {
  int max_iters = 40;
  double tol = 1e-6;
  // Called after every iteration with the 1-based iteration index and the
  // current velocity estimate.
  std::function<void(int, const Matrix&)> on_iteration;
};

struct PropagationResult {
  Matrix velocities;  // n x 2
  int iterations = 0;
  double last_change = 0.0;
};

/// Fills unknown velocities by repeated averaging with the random-walk
/// adjacency, resetting known rows after each sweep. Unknown rows start at
/// the mean of the known rows.
PropagationResult propagate_features(const SparseSample& sample, const SparseOperator& op,
                                     const PropagationOptions& options = {});

/// 1/2 * sum over undirected edges of w_ij * |H_i - H_j|^2.
double dirichlet_energy(const FlowGraph& graph, const Matrix& h, EdgeWeighting weighting = {});

}  // namespace flowrec
