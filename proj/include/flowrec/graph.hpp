#pragma once

#include "flowrec/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowrec {

/// One 2D velocity field sampled on a point cloud at a single crank angle.
struct FlowSnapshot {
  Matrix points;      // n x 2, (x, z) in meters
  Matrix velocities;  // n x 2, (u_x, u_z) in m/s
  double cad = 0.0;
  std::string domain_tag;
  // Optional per-node 0/1 column carried by pre-masked files. Empty when absent.
  std::vector<std::uint8_t> mask;

  Eigen::Index size() const { return points.rows(); }
};

/// Throws Error on shape mismatch, n < 2, non-finite values or duplicate points.
void validate_snapshot(const FlowSnapshot& snapshot);

// Column layout of FlowGraph::node_features.
namespace feature {
inline constexpr int ux = 0;
inline constexpr int uz = 1;
inline constexpr int bi = 2;
inline constexpr int x = 3;
inline constexpr int z = 4;
inline constexpr int count = 5;
}  // namespace feature

/// Symmetric k-NN graph over a snapshot. Adjacency is stored CSR-style: the
/// neighbors of node i are neighbor_index[offsets[i] .. offsets[i+1]), sorted
/// ascending, with the matching normalized distances. Self-loops are never
/// stored.
class FlowGraph {
 public:
  FlowGraph() = default;
  FlowGraph(Matrix node_features, std::vector<std::int64_t> offsets,
            std::vector<int> neighbor_index, std::vector<double> distance,
            double length_scale, int k, bool saturated);

  Eigen::Index num_nodes() const { return node_features_.rows(); }
  std::size_t num_directed_edges() const { return neighbor_index_.size(); }

  const Matrix& node_features() const { return node_features_; }
  std::span<const std::int64_t> offsets() const { return offsets_; }
  std::span<const int> neighbor_index() const { return neighbor_index_; }
  std::span<const double> edge_distance() const { return distance_; }

  std::span<const int> neighbors(Eigen::Index i) const;
  std::span<const double> distances(Eigen::Index i) const;
  int degree(Eigen::Index i) const {
    return static_cast<int>(offsets_[i + 1] - offsets_[i]);
  }

  /// Normalized coordinates, n x 2 (a view of the feature columns x, z).
  Matrix coordinates() const;

  double length_scale() const { return length_scale_; }
  int k() const { return k_; }
  /// True when k >= n forced a complete graph.
  bool saturated() const { return saturated_; }

  /// Same topology with a different feature matrix (n x 5).
  FlowGraph with_features(Matrix features) const;

 private:
  Matrix node_features_;
  std::vector<std::int64_t> offsets_{0};
  std::vector<int> neighbor_index_;
  std::vector<double> distance_;
  double length_scale_ = 1.0;
  int k_ = 0;
  bool saturated_ = false;
};

inline constexpr int kDefaultNeighbors = 8;

/// Bounding-box diagonal of the snapshot's points.
double bounding_box_diagonal(const Matrix& points);

/// Connects each node to its k nearest neighbors (ties broken by lower index)
/// and symmetrizes by union. Coordinates are divided by length_scale, which
/// defaults to the bounding-box diagonal.
FlowGraph build_knn_graph(const FlowSnapshot& snapshot, int k,
                          std::optional<double> length_scale = std::nullopt);

struct EdgeWeighting {
  enum class Kind { unit, inverse_distance, gaussian };
  Kind kind = Kind::unit;
  double bandwidth = 1.0;

  static EdgeWeighting unit() { return {}; }
  static EdgeWeighting inverse_distance() { return {Kind::inverse_distance, 1.0}; }
  static EdgeWeighting gaussian(double bandwidth) { return {Kind::gaussian, bandwidth}; }

  double weight(double distance) const;
};

enum class OperatorKind { rw_adjacency, rw_laplacian };

struct SparseOperator {
  SparseMatrix matrix;
  OperatorKind kind = OperatorKind::rw_adjacency;

  Eigen::Index size() const { return matrix.rows(); }
  Matrix apply(const Matrix& h) const;
};

/// D^-1 A_w.
SparseOperator rw_adjacency(const FlowGraph& graph, EdgeWeighting weighting = {});
/// I - D^-1 A_w.
SparseOperator rw_laplacian(const FlowGraph& graph, EdgeWeighting weighting = {});

/// Row-normalized (A + I) with unit weights, the propagation matrix of GCN layers.
SparseMatrix gcn_propagation(const FlowGraph& graph);

/// Unweighted neighbor mean (no self term), used by mean-aggregator layers.
SparseMatrix neighbor_mean(const FlowGraph& graph);

}  // namespace flowrec
