#pragma once

#include "flowrec/graph.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace flowrec {

/// A graph whose velocity features are masked, plus the label and the nodes
/// that are scored.
struct SparseSample {
  FlowGraph graph;
  std::vector<std::uint8_t> keep_mask;
  Matrix target_velocities;  // n x 2
  std::vector<std::uint8_t> eval_mask;

  Eigen::Index num_nodes() const { return graph.num_nodes(); }
  std::size_t kept() const;
  /// Known velocities: target rows where keep_mask is set, zero elsewhere.
  Matrix known_velocities() const;
};

/// Builds a sample from an unmasked graph and an explicit keep set. Velocity
/// features come from the graph's own u_x, u_z columns.
SparseSample make_sparse_sample(const FlowGraph& graph, std::vector<std::uint8_t> keep_mask,
                                Matrix target_velocities, std::vector<std::uint8_t> eval_mask);

/// Keeps exactly round(keep_fraction * n) uniformly drawn nodes.
SparseSample mask_random(const FlowGraph& graph, double keep_fraction, std::uint64_t seed);

inline constexpr int kDefaultRefine = 7;

struct RefinedGrid {
  FlowSnapshot snapshot;
  // For every input node, its index in the refined snapshot.
  std::vector<int> origin_index;
  int nx = 0;
  int nz = 0;
};

/// Inserts (refine - 1) evenly spaced zero-velocity nodes between neighboring
/// grid points along both axes. The output mask column marks original nodes
/// with 1. Nodes are ordered with x varying fastest.
RefinedGrid refine_grid(const FlowSnapshot& snapshot, int refine);

/// refine_grid without the index map. refine = 1 returns the input unchanged.
FlowSnapshot insert_intermediate_nodes(const FlowSnapshot& snapshot, int refine);

struct HalfSplit {
  std::vector<int> input;  // ceil(n/2) indices, ascending
  std::vector<int> eval;   // floor(n/2) indices, ascending
};

HalfSplit split_half(const FlowSnapshot& snapshot, std::uint64_t seed);

/// Super-resolution protocol for coarse grid measurements: half the points
/// feed the input, the other half are scored, and zero-velocity nodes are
/// inserted between all measurement points before the graph is built.
struct SuperResolutionCase {
  SparseSample sample;
  RefinedGrid grid;
  HalfSplit split;
};

SuperResolutionCase super_resolution_case(const FlowSnapshot& snapshot, int refine,
                                          std::uint64_t seed, int k,
                                          std::optional<double> length_scale = std::nullopt);

}  // namespace flowrec
