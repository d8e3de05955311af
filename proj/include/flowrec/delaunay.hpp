#pragma once

#include "flowrec/types.hpp"

#include <array>
#include <vector>

namespace flowrec {

/// Planar Delaunay triangulation of an n x 2 point set.
struct Triangulation {
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise vertex ids
  // neighbors[t][k] is the triangle across the edge opposite vertex k, or -1.
  std::vector<std::array<int, 3>> neighbors;
  std::vector<int> hull;  // counter-clockwise boundary vertices

  bool empty() const { return triangles.empty(); }
};

/// Sweep triangulation followed by Lawson edge flips. Returns an empty
/// triangulation when fewer than 3 points are given or all are collinear.
Triangulation delaunay(const Matrix& points);

/// Twice the signed area of (a, b, c); positive when counter-clockwise.
double orient2d(const double* a, const double* b, const double* c);
/// Positive when d lies strictly inside the circumcircle of ccw (a, b, c).
double incircle(const double* a, const double* b, const double* c, const double* d);

/// Barycentric coordinates of (x, z) in triangle t.
std::array<double, 3> barycentric(const Matrix& points, const std::array<int, 3>& tri, double x, double z);

/// Triangle lookup by bucketed bounding boxes.
class TriangleLocator {
 public:
  TriangleLocator(const Matrix& points, const Triangulation& tri);
  /// Index of a triangle containing (x, z) (with a small tolerance), or -1.
  int locate(double x, double z) const;

 private:
  const Matrix* points_;
  const Triangulation* tri_;
  double x0_ = 0.0, z0_ = 0.0, cell_ = 1.0;
  int nx_ = 1, nz_ = 1;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace flowrec
