#include "flowrec/featprop.hpp"

#include <cmath>

namespace flowrec {

PropagationResult propagate_features(const SparseSample& sample, const SparseOperator& op,
                                     const PropagationOptions& options) {
  if (op.kind != OperatorKind::rw_adjacency) {
    fail(ErrorCode::invalid_argument, "feature propagation needs a random-walk adjacency");
  }
  if (op.size() != sample.num_nodes()) {
    fail(ErrorCode::shape_mismatch, "operator size does not match the sample");
  }
  if (options.max_iters < 1 || options.tol < 0.0) {
    fail(ErrorCode::invalid_argument, "max_iters must be >= 1 and tol >= 0");
  }
  const Matrix known = sample.known_velocities();
  const auto n = sample.num_nodes();

  // Unknown rows start at the mean of the known ones, which keeps every
  // iterate inside the range of the known values.
  Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
  Eigen::Index n_known = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!sample.keep_mask[i]) continue;
    mean += known.row(i);
    ++n_known;
  }
  if (n_known > 0) mean /= static_cast<double>(n_known);

  PropagationResult result;
  result.velocities = known;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!sample.keep_mask[i]) result.velocities.row(i) = mean;
  }
  Matrix next(n, 2);
  for (int it = 1; it <= options.max_iters; ++it) {
    next.noalias() = op.matrix * result.velocities;
    double change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sample.keep_mask[i]) {
        next.row(i) = known.row(i);
        continue;
      }
      if (!std::isfinite(next(i, 0)) || !std::isfinite(next(i, 1))) {
        fail(ErrorCode::non_finite, "feature propagation produced a non-finite value at iteration " +
                                        std::to_string(it));
      }
      change = std::max(change, (next.row(i) - result.velocities.row(i)).cwiseAbs().maxCoeff());
    }
    result.velocities.swap(next);
    result.iterations = it;
    result.last_change = change;
    if (options.on_iteration) options.on_iteration(it, result.velocities);
    if (change < options.tol) break;
  }
  return result;
}

double dirichlet_energy(const FlowGraph& graph, const Matrix& h, EdgeWeighting weighting) {
  if (h.rows() != graph.num_nodes()) {
    fail(ErrorCode::shape_mismatch, "feature rows do not match the graph");
  }
  double energy = 0.0;
  for (Eigen::Index i = 0; i < graph.num_nodes(); ++i) {
    const auto nbrs = graph.neighbors(i);
    const auto dist = graph.distances(i);
    for (std::size_t e = 0; e < nbrs.size(); ++e) {
      if (nbrs[e] <= i) continue;
      energy += weighting.weight(dist[e]) * (h.row(i) - h.row(nbrs[e])).squaredNorm();
    }
  }
  return 0.5 * energy;
}

}  // namespace flowrec
