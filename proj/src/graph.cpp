#include "flowrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace flowrec {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::duplicate_points: return "duplicate_points";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::not_a_grid: return "not_a_grid";
    case ErrorCode::empty_mask: return "empty_mask";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

void validate_snapshot(const FlowSnapshot& snapshot) {
  const auto n = snapshot.points.rows();
  if (snapshot.points.cols() != 2 || snapshot.velocities.cols() != 2 ||
      snapshot.velocities.rows() != n) {
    fail(ErrorCode::shape_mismatch, "snapshot points and velocities must both be n x 2");
  }
  if (n < 2) fail(ErrorCode::invalid_argument, "snapshot needs at least 2 points");
  if (!snapshot.mask.empty() && static_cast<Eigen::Index>(snapshot.mask.size()) != n) {
    fail(ErrorCode::shape_mismatch, "mask column length differs from point count");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!snapshot.points.row(i).allFinite() || !snapshot.velocities.row(i).allFinite()) {
      fail(ErrorCode::non_finite, "non-finite value at node " + std::to_string(i));
    }
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& p = snapshot.points;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::pair(p(a, 0), p(a, 1)) < std::pair(p(b, 0), p(b, 1));
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const int a = order[i - 1];
    const int b = order[i];
    if (p(a, 0) == p(b, 0) && p(a, 1) == p(b, 1)) {
      std::ostringstream msg;
      msg << "duplicate points at nodes " << std::min(a, b) << " and " << std::max(a, b);
      fail(ErrorCode::duplicate_points, msg.str());
    }
  }
}

FlowGraph::FlowGraph(Matrix node_features, std::vector<std::int64_t> offsets,
                     std::vector<int> neighbor_index, std::vector<double> distance,
                     double length_scale, int k, bool saturated)
    : node_features_(std::move(node_features)),
      offsets_(std::move(offsets)),
      neighbor_index_(std::move(neighbor_index)),
      distance_(std::move(distance)),
      length_scale_(length_scale),
      k_(k),
      saturated_(saturated) {}

std::span<const int> FlowGraph::neighbors(Eigen::Index i) const {
  return std::span<const int>(neighbor_index_).subspan(
      static_cast<std::size_t>(offsets_[i]), static_cast<std::size_t>(degree(i)));
}

std::span<const double> FlowGraph::distances(Eigen::Index i) const {
  return std::span<const double>(distance_).subspan(
      static_cast<std::size_t>(offsets_[i]), static_cast<std::size_t>(degree(i)));
}

Matrix FlowGraph::coordinates() const {
  return node_features_.middleCols(feature::x, 2);
}

FlowGraph FlowGraph::with_features(Matrix features) const {
  if (features.rows() != num_nodes() || features.cols() != feature::count) {
    fail(ErrorCode::shape_mismatch, "replacement features must be n x 5");
  }
  FlowGraph out = *this;
  out.node_features_ = std::move(features);
  return out;
}

double bounding_box_diagonal(const Matrix& points) {
  const Eigen::RowVector2d lo = points.colwise().minCoeff();
  const Eigen::RowVector2d hi = points.colwise().maxCoeff();
  return (hi - lo).norm();
}

namespace {

struct Neighbor {
  double dist2;
  int index;
  bool operator<(const Neighbor& o) const {
    return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
  }
};

// Uniform bucket grid over the normalized coordinates.
class BucketGrid {
 public:
  explicit BucketGrid(const Matrix& coords) : coords_(coords) {
    const auto n = coords.rows();
    lo_ = coords.colwise().minCoeff();
    const Eigen::RowVector2d extent = coords.colwise().maxCoeff() - lo_;
    const double area_cell = std::sqrt(extent(0) * extent(1) / static_cast<double>(n));
    const double line_cell = extent.maxCoeff() / static_cast<double>(n);
    cell_ = 1.5 * std::max(area_cell, line_cell);
    if (!(cell_ > 0.0)) cell_ = 1.0;
    nx_ = static_cast<int>(extent(0) / cell_) + 1;
    nz_ = static_cast<int>(extent(1) / cell_) + 1;
    start_.assign(static_cast<std::size_t>(nx_) * nz_ + 1, 0);
    std::vector<int> cell_of(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto [cx, cz] = cell_coords(coords(i, 0), coords(i, 1));
      cell_of[i] = cz * nx_ + cx;
      ++start_[cell_of[i] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    items_.resize(static_cast<std::size_t>(n));
    std::vector<std::int64_t> fill(start_.begin(), start_.end() - 1);
    for (Eigen::Index i = 0; i < n; ++i) items_[fill[cell_of[i]]++] = static_cast<int>(i);
  }

  // The k nearest other nodes of node i, sorted by (distance, index).
  std::vector<Neighbor> nearest(int i, int k) const {
    std::vector<Neighbor> best;
    best.reserve(static_cast<std::size_t>(k) + 1);
    const double xi = coords_(i, 0);
    const double zi = coords_(i, 1);
    const auto [cx, cz] = cell_coords(xi, zi);
    const int max_ring = std::max(nx_, nz_);
    for (int r = 0; r <= max_ring; ++r) {
      for (int gz = cz - r; gz <= cz + r; ++gz) {
        if (gz < 0 || gz >= nz_) continue;
        const bool edge_row = (gz == cz - r || gz == cz + r);
        for (int gx = cx - r; gx <= cx + r; gx += (edge_row ? 1 : 2 * std::max(r, 1))) {
          if (gx < 0 || gx >= nx_) continue;
          const int c = gz * nx_ + gx;
          for (auto it = start_[c]; it < start_[c + 1]; ++it) {
            const int j = items_[it];
            if (j == i) continue;
            const double dx = xi - coords_(j, 0);
            const double dz = zi - coords_(j, 1);
            Neighbor cand{dx * dx + dz * dz, j};
            if (static_cast<int>(best.size()) < k) {
              best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
            } else if (cand < best.back()) {
              best.pop_back();
              best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
            }
          }
          if (r == 0) break;
        }
      }
      if (static_cast<int>(best.size()) == k) {
        // Anything outside the searched block is at least r * cell away.
        const double reach = static_cast<double>(r) * cell_;
        if (best.back().dist2 < reach * reach) break;
      }
    }
    return best;
  }

 private:
  std::pair<int, int> cell_coords(double x, double z) const {
    const int cx = std::clamp(static_cast<int>((x - lo_(0)) / cell_), 0, nx_ - 1);
    const int cz = std::clamp(static_cast<int>((z - lo_(1)) / cell_), 0, nz_ - 1);
    return {cx, cz};
  }

  const Matrix& coords_;
  Eigen::RowVector2d lo_;
  double cell_ = 1.0;
  int nx_ = 1;
  int nz_ = 1;
  std::vector<std::int64_t> start_;
  std::vector<int> items_;
};

}  // namespace

FlowGraph build_knn_graph(const FlowSnapshot& snapshot, int k,
                          std::optional<double> length_scale) {
  validate_snapshot(snapshot);
  if (k < 1) fail(ErrorCode::invalid_argument, "k must be >= 1");
  const double scale = length_scale.value_or(bounding_box_diagonal(snapshot.points));
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    fail(ErrorCode::invalid_argument, "length_scale must be positive and finite");
  }
  const auto n = snapshot.size();
  const bool saturated = k >= n;
  const int k_eff = saturated ? static_cast<int>(n - 1) : k;

  Matrix features(n, feature::count);
  features.col(feature::ux) = snapshot.velocities.col(0);
  features.col(feature::uz) = snapshot.velocities.col(1);
  features.col(feature::bi).setOnes();
  features.col(feature::x) = snapshot.points.col(0) / scale;
  features.col(feature::z) = snapshot.points.col(1) / scale;
  const Matrix coords = features.middleCols(feature::x, 2);

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * k_eff * 2);
  const BucketGrid grid(coords);
  for (int i = 0; i < n; ++i) {
    for (const auto& nb : grid.nearest(i, k_eff)) {
      pairs.emplace_back(i, nb.index);
      pairs.emplace_back(nb.index, i);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<std::int64_t> offsets(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> neighbors;
  std::vector<double> distance;
  neighbors.reserve(pairs.size());
  distance.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    ++offsets[i + 1];
    neighbors.push_back(j);
    const double dx = coords(i, 0) - coords(j, 0);
    const double dz = coords(i, 1) - coords(j, 1);
    distance.push_back(std::sqrt(dx * dx + dz * dz));
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return FlowGraph(std::move(features), std::move(offsets), std::move(neighbors),
                   std::move(distance), scale, k, saturated);
}

double EdgeWeighting::weight(double distance) const {
  switch (kind) {
    case Kind::unit: return 1.0;
    case Kind::inverse_distance: return 1.0 / distance;
    case Kind::gaussian: return std::exp(-distance * distance / (2.0 * bandwidth * bandwidth));
  }
  return 1.0;
}

Matrix SparseOperator::apply(const Matrix& h) const {
  if (h.rows() != matrix.cols()) {
    fail(ErrorCode::shape_mismatch, "operator size does not match feature rows");
  }
  return matrix * h;
}

namespace {

// Builds a row-major sparse matrix whose row i holds weights over the stored
// neighbors of i, optionally with a diagonal entry, then scales every row to
// sum to one.
SparseMatrix row_normalized(const FlowGraph& graph, const EdgeWeighting& weighting,
                            double self_weight, bool include_self) {
  const auto n = graph.num_nodes();
  SparseMatrix m(n, n);
  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  triplets.reserve(graph.num_directed_edges() + (include_self ? n : 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto nbrs = graph.neighbors(i);
    const auto dist = graph.distances(i);
    if (nbrs.empty() && !include_self) continue;  // isolated node: empty row
    double total = include_self ? self_weight : 0.0;
    for (std::size_t e = 0; e < nbrs.size(); ++e) total += weighting.weight(dist[e]);
    if (!(total > 0.0) || !std::isfinite(total)) {
      fail(ErrorCode::internal, "zero weighted degree at node " + std::to_string(i));
    }
    if (include_self) triplets.emplace_back(i, i, self_weight / total);
    for (std::size_t e = 0; e < nbrs.size(); ++e) {
      triplets.emplace_back(i, nbrs[e], weighting.weight(dist[e]) / total);
    }
  }
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

}  // namespace

SparseOperator rw_adjacency(const FlowGraph& graph, EdgeWeighting weighting) {
  if (weighting.kind == EdgeWeighting::Kind::gaussian && !(weighting.bandwidth > 0.0)) {
    fail(ErrorCode::invalid_argument, "gaussian bandwidth must be positive");
  }
  return {row_normalized(graph, weighting, 0.0, false), OperatorKind::rw_adjacency};
}

SparseOperator rw_laplacian(const FlowGraph& graph, EdgeWeighting weighting) {
  auto adj = rw_adjacency(graph, weighting);
  SparseMatrix identity(graph.num_nodes(), graph.num_nodes());
  // Isolated nodes keep a zero row so that constants stay in the kernel.
  std::vector<Eigen::Triplet<double, std::int64_t>> diag;
  for (Eigen::Index i = 0; i < graph.num_nodes(); ++i) {
    if (!graph.neighbors(i).empty()) diag.emplace_back(i, i, 1.0);
  }
  identity.setFromTriplets(diag.begin(), diag.end());
  SparseMatrix lap = identity - adj.matrix;
  lap.makeCompressed();
  return {std::move(lap), OperatorKind::rw_laplacian};
}

SparseMatrix gcn_propagation(const FlowGraph& graph) {
  return row_normalized(graph, EdgeWeighting::unit(), 1.0, true);
}

SparseMatrix neighbor_mean(const FlowGraph& graph) {
  return row_normalized(graph, EdgeWeighting::unit(), 0.0, false);
}

}  // namespace flowrec
