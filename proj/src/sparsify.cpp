#include "flowrec/sparsify.hpp"

#include "flowrec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace flowrec {

std::size_t SparseSample::kept() const {
  return static_cast<std::size_t>(std::count(keep_mask.begin(), keep_mask.end(), 1));
}

Matrix SparseSample::known_velocities() const {
  Matrix known = Matrix::Zero(num_nodes(), 2);
  for (Eigen::Index i = 0; i < num_nodes(); ++i) {
    if (keep_mask[i]) known.row(i) = target_velocities.row(i);
  }
  return known;
}

SparseSample make_sparse_sample(const FlowGraph& graph, std::vector<std::uint8_t> keep_mask,
                                Matrix target_velocities, std::vector<std::uint8_t> eval_mask) {
  const auto n = graph.num_nodes();
  if (static_cast<Eigen::Index>(keep_mask.size()) != n ||
      static_cast<Eigen::Index>(eval_mask.size()) != n || target_velocities.rows() != n ||
      target_velocities.cols() != 2) {
    fail(ErrorCode::shape_mismatch, "mask and target sizes must match the graph");
  }
  if (std::count(keep_mask.begin(), keep_mask.end(), 1) == 0) {
    fail(ErrorCode::empty_mask, "sample keeps no nodes");
  }
  Matrix features = graph.node_features();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (keep_mask[i]) {
      features(i, feature::bi) = 1.0;
    } else {
      features(i, feature::ux) = 0.0;
      features(i, feature::uz) = 0.0;
      features(i, feature::bi) = 0.0;
    }
  }
  return SparseSample{graph.with_features(std::move(features)), std::move(keep_mask),
                      std::move(target_velocities), std::move(eval_mask)};
}

SparseSample mask_random(const FlowGraph& graph, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    fail(ErrorCode::invalid_argument, "keep_fraction must lie in (0, 1]");
  }
  const auto n = graph.num_nodes();
  const auto count = static_cast<Eigen::Index>(std::llround(keep_fraction * static_cast<double>(n)));
  if (count == 0) {
    fail(ErrorCode::empty_mask, "keep_fraction retains zero of " + std::to_string(n) + " nodes");
  }
  // Partial Fisher-Yates: the first `count` slots are the kept nodes.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto j = i + static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < count; ++i) keep[order[i]] = 1;
  Matrix targets = graph.node_features().leftCols(2);
  return make_sparse_sample(graph, std::move(keep), std::move(targets),
                            std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1));
}

namespace {

struct Axis {
  std::vector<double> values;  // one representative per grid line, ascending
  double deviation = 0.0;      // worst offset from uniform spacing, in spacings
};

Axis grid_axis(const Matrix& points, int col) {
  std::vector<double> v(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) v[i] = points(i, col);
  std::sort(v.begin(), v.end());
  const double extent = v.back() - v.front();
  const double tol = 1e-9 * std::max(extent, 1e-300);
  Axis axis;
  for (double x : v) {
    if (axis.values.empty() || x - axis.values.back() > tol) axis.values.push_back(x);
  }
  if (axis.values.size() >= 2) {
    const double spacing = extent / static_cast<double>(axis.values.size() - 1);
    for (std::size_t a = 0; a < axis.values.size(); ++a) {
      const double expected = axis.values.front() + spacing * static_cast<double>(a);
      axis.deviation = std::max(axis.deviation, std::abs(axis.values[a] - expected) / spacing);
    }
  }
  return axis;
}

int locate(const std::vector<double>& values, double x) {
  const auto it = std::lower_bound(values.begin(), values.end(), x - 1e-9 * (values.back() - values.front()));
  return static_cast<int>(it - values.begin());
}

}  // namespace

RefinedGrid refine_grid(const FlowSnapshot& snapshot, int refine) {
  validate_snapshot(snapshot);
  if (refine < 1) fail(ErrorCode::invalid_argument, "refine must be >= 1");
  const Axis ax = grid_axis(snapshot.points, 0);
  const Axis az = grid_axis(snapshot.points, 1);
  const auto p = static_cast<int>(ax.values.size());
  const auto q = static_cast<int>(az.values.size());
  const double deviation = std::max(ax.deviation, az.deviation);
  if (p < 2 || q < 2 || static_cast<Eigen::Index>(p) * q != snapshot.size() || deviation > 1e-9) {
    std::ostringstream msg;
    msg << "points do not form a regular grid: " << p << " x " << q << " lines for "
        << snapshot.size() << " points, spacing deviation " << deviation;
    fail(ErrorCode::not_a_grid, msg.str());
  }

  const int nx = (p - 1) * refine + 1;
  const int nz = (q - 1) * refine + 1;
  RefinedGrid out;
  out.nx = nx;
  out.nz = nz;
  auto& s = out.snapshot;
  s.cad = snapshot.cad;
  s.domain_tag = snapshot.domain_tag;
  s.points.resize(static_cast<Eigen::Index>(nx) * nz, 2);
  s.velocities = Matrix::Zero(s.points.rows(), 2);
  s.mask.assign(static_cast<std::size_t>(s.points.rows()), 0);

  auto line_position = [refine](const std::vector<double>& lines, int r) {
    const int a = r / refine;
    const int t = r % refine;
    if (t == 0) return lines[a];
    return lines[a] + (lines[a + 1] - lines[a]) * static_cast<double>(t) / refine;
  };
  for (int rz = 0; rz < nz; ++rz) {
    for (int rx = 0; rx < nx; ++rx) {
      const auto idx = static_cast<Eigen::Index>(rz) * nx + rx;
      s.points(idx, 0) = line_position(ax.values, rx);
      s.points(idx, 1) = line_position(az.values, rz);
    }
  }

  out.origin_index.assign(static_cast<std::size_t>(snapshot.size()), -1);
  for (Eigen::Index i = 0; i < snapshot.size(); ++i) {
    const int a = locate(ax.values, snapshot.points(i, 0));
    const int b = locate(az.values, snapshot.points(i, 1));
    const auto idx = static_cast<Eigen::Index>(b) * refine * nx + static_cast<Eigen::Index>(a) * refine;
    if (s.mask[idx]) {
      fail(ErrorCode::not_a_grid, "two points map to grid cell (" + std::to_string(a) + ", " +
                                      std::to_string(b) + ")");
    }
    s.mask[idx] = 1;
    // Coincident nodes keep the measured coordinates bit for bit.
    s.points.row(idx) = snapshot.points.row(i);
    s.velocities.row(idx) = snapshot.velocities.row(i);
    out.origin_index[i] = static_cast<int>(idx);
  }
  return out;
}

FlowSnapshot insert_intermediate_nodes(const FlowSnapshot& snapshot, int refine) {
  if (refine == 1) {
    validate_snapshot(snapshot);
    return snapshot;
  }
  return refine_grid(snapshot, refine).snapshot;
}

HalfSplit split_half(const FlowSnapshot& snapshot, std::uint64_t seed) {
  const auto n = snapshot.size();
  if (n < 2) fail(ErrorCode::invalid_argument, "split_half needs at least 2 nodes");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  const auto first = static_cast<std::size_t>((n + 1) / 2);
  HalfSplit split;
  split.input.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  split.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  std::sort(split.input.begin(), split.input.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

SuperResolutionCase super_resolution_case(const FlowSnapshot& snapshot, int refine,
                                          std::uint64_t seed, int k,
                                          std::optional<double> length_scale) {
  SuperResolutionCase out;
  out.split = split_half(snapshot, seed);
  out.grid = refine_grid(snapshot, refine);
  const auto& fine = out.grid.snapshot;
  const auto n = fine.size();
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> eval(static_cast<std::size_t>(n), 0);
  for (int i : out.split.input) keep[out.grid.origin_index[i]] = 1;
  for (int i : out.split.eval) eval[out.grid.origin_index[i]] = 1;
  const FlowGraph graph = build_knn_graph(fine, k, length_scale);
  out.sample = make_sparse_sample(graph, std::move(keep), fine.velocities, std::move(eval));
  return out;
}

}  // namespace flowrec
