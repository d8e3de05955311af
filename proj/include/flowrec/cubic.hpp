#pragma once

#include "flowrec/delaunay.hpp"
#include "flowrec/sparsify.hpp"

#include <optional>

namespace flowrec {

struct GradientEstimateOptions {
  int max_iters = 1000;
  double tol = 1e-12;
};

/// Nodal gradients minimizing the summed squared second derivative of cubic
/// edge curves (Gauss-Seidel over vertices). Returns n x 2.
Matrix estimate_gradients(const Matrix& points, const Triangulation& tri, const Vector& values,
                          const GradientEstimateOptions& options = {});

/// C1 piecewise-cubic interpolant on a Delaunay triangulation; every
/// triangle is split at its centroid into three cubic Bezier patches.
class CloughTocherInterpolator {
 public:
  /// points n x 2, values n x m.
  CloughTocherInterpolator(Matrix points, Matrix values, const GradientEstimateOptions& options = {});
  // The locator points into the members.
  CloughTocherInterpolator(const CloughTocherInterpolator&) = delete;
  CloughTocherInterpolator& operator=(const CloughTocherInterpolator&) = delete;

  /// False for fewer than 3 points or a collinear set.
  bool valid() const { return !tri_.empty(); }
  const Triangulation& triangulation() const { return tri_; }
  /// n x 2 gradient of value column c.
  const Matrix& gradients(int c) const { return grads_[c]; }

  /// Interpolated row at (x, z), or nullopt outside the convex hull.
  std::optional<Eigen::RowVectorXd> evaluate(double x, double z) const;

 private:
  double patch(int t, int c, const std::array<double, 3>& b) const;

  Matrix points_;
  Matrix values_;
  Triangulation tri_;
  std::vector<Matrix> grads_;
  std::optional<TriangleLocator> locator_;
};

struct CubicReconstruction {
  Matrix velocities;  // n x 2
  // Set when fewer than 3 retained nodes or a collinear set forced
  // nearest-neighbor values everywhere.
  bool nearest_fallback = false;
  int outside_hull = 0;  // nodes filled from the nearest retained node
};

/// Cubic interpolation of the retained velocities to every node; nodes
/// outside the hull of the retained set take the nearest retained value.
CubicReconstruction cubic_baseline(const SparseSample& sample);

}  // namespace flowrec
