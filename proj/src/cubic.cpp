#include "flowrec/cubic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flowrec {

namespace {

std::vector<std::vector<int>> vertex_neighbors(const Triangulation& tri, Eigen::Index n) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& t : tri.triangles) {
    for (int k = 0; k < 3; ++k) {
      adj[t[k]].push_back(t[(k + 1) % 3]);
      adj[t[k]].push_back(t[(k + 2) % 3]);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

}  // namespace

Matrix estimate_gradients(const Matrix& points, const Triangulation& tri, const Vector& values,
                          const GradientEstimateOptions& options) {
  const Eigen::Index n = points.rows();
  if (values.size() != n) fail(ErrorCode::shape_mismatch, "estimate_gradients: one value per point");
  Matrix grad = Matrix::Zero(n, 2);
  const auto adj = vertex_neighbors(tri, n);
  for (int iter = 0; iter < options.max_iters; ++iter) {
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (adj[i].empty()) continue;
      double q00 = 0.0, q01 = 0.0, q11 = 0.0, s0 = 0.0, s1 = 0.0;
      for (int j : adj[i]) {
        const double ex = points(j, 0) - points(i, 0);
        const double ey = points(j, 1) - points(i, 1);
        const double len = std::hypot(ex, ey);
        const double l3 = len * len * len;
        const double df2 = -ex * grad(j, 0) - ey * grad(j, 1);
        const double rhs = 6.0 * (values[i] - values[j]) - 2.0 * df2;
        q00 += 4.0 * ex * ex / l3;
        q01 += 4.0 * ex * ey / l3;
        q11 += 4.0 * ey * ey / l3;
        s0 += rhs * ex / l3;
        s1 += rhs * ey / l3;
      }
      const double det = q00 * q11 - q01 * q01;
      const double r0 = (q11 * s0 - q01 * s1) / det;
      const double r1 = (-q01 * s0 + q00 * s1) / det;
      double change = std::max(std::abs(grad(i, 0) + r0), std::abs(grad(i, 1) + r1));
      grad(i, 0) = -r0;
      grad(i, 1) = -r1;
      change /= std::max(1.0, std::max(std::abs(r0), std::abs(r1)));
      err = std::max(err, change);
    }
    if (err < options.tol) break;
  }
  return grad;
}

CloughTocherInterpolator::CloughTocherInterpolator(Matrix points, Matrix values,
                                                   const GradientEstimateOptions& options)
    : points_(std::move(points)), values_(std::move(values)) {
  if (points_.cols() != 2 || values_.rows() != points_.rows()) {
    fail(ErrorCode::shape_mismatch, "CloughTocherInterpolator: points n x 2 and values n x m");
  }
  tri_ = delaunay(points_);
  if (tri_.empty()) return;
  for (Eigen::Index c = 0; c < values_.cols(); ++c) {
    grads_.push_back(estimate_gradients(points_, tri_, values_.col(c), options));
  }
  locator_.emplace(points_, tri_);
}

double CloughTocherInterpolator::patch(int t, int c, const std::array<double, 3>& b) const {
  const auto& v = tri_.triangles[t];
  const Matrix& df = grads_[c];
  const double* x0 = points_.row(v[0]).data();
  const double* x1 = points_.row(v[1]).data();
  const double* x2 = points_.row(v[2]).data();

  const double e12x = x1[0] - x0[0], e12y = x1[1] - x0[1];
  const double e23x = x2[0] - x1[0], e23y = x2[1] - x1[1];
  const double e31x = x0[0] - x2[0], e31y = x0[1] - x2[1];

  const double f1 = values_(v[0], c), f2 = values_(v[1], c), f3 = values_(v[2], c);
  const double df12 = df(v[0], 0) * e12x + df(v[0], 1) * e12y;
  const double df21 = -(df(v[1], 0) * e12x + df(v[1], 1) * e12y);
  const double df23 = df(v[1], 0) * e23x + df(v[1], 1) * e23y;
  const double df32 = -(df(v[2], 0) * e23x + df(v[2], 1) * e23y);
  const double df31 = df(v[2], 0) * e31x + df(v[2], 1) * e31y;
  const double df13 = -(df(v[0], 0) * e31x + df(v[0], 1) * e31y);

  // Bezier ordinates; index digits are the powers of (b1, b2, b3, b4).
  const double c3000 = f1;
  const double c2100 = (df12 + 3.0 * c3000) / 3.0;
  const double c2010 = (df13 + 3.0 * c3000) / 3.0;
  const double c0300 = f2;
  const double c1200 = (df21 + 3.0 * c0300) / 3.0;
  const double c0210 = (df23 + 3.0 * c0300) / 3.0;
  const double c0030 = f3;
  const double c1020 = (df31 + 3.0 * c0030) / 3.0;
  const double c0120 = (df32 + 3.0 * c0030) / 3.0;

  const double c2001 = (c2100 + c2010 + c3000) / 3.0;
  const double c0201 = (c1200 + c0300 + c0210) / 3.0;
  const double c0021 = (c1020 + c0120 + c0030) / 3.0;

  // Cross-boundary derivative continuity with the neighboring triangles.
  double g[3];
  for (int k = 0; k < 3; ++k) {
    const int u = tri_.neighbors[t][k];
    if (u < 0) {
      g[k] = -0.5;
      continue;
    }
    double cx = 0.0, cz = 0.0;
    for (int w : tri_.triangles[u]) {
      cx += points_(w, 0) / 3.0;
      cz += points_(w, 1) / 3.0;
    }
    const auto y = barycentric(points_, v, cx, cz);
    if (k == 0) {
      g[k] = (2.0 * y[2] + y[1] - 1.0) / (2.0 - 3.0 * y[2] - 3.0 * y[1]);
    } else if (k == 1) {
      g[k] = (2.0 * y[0] + y[2] - 1.0) / (2.0 - 3.0 * y[0] - 3.0 * y[2]);
    } else {
      g[k] = (2.0 * y[1] + y[0] - 1.0) / (2.0 - 3.0 * y[1] - 3.0 * y[0]);
    }
  }

  const double c0111 = (g[0] * (-c0300 + 3.0 * c0210 - 3.0 * c0120 + c0030) +
                        (-c0300 + 2.0 * c0210 - c0120 + c0021 + c0201)) / 2.0;
  const double c1011 = (g[1] * (-c0030 + 3.0 * c1020 - 3.0 * c2010 + c3000) +
                        (-c0030 + 2.0 * c1020 - c2010 + c2001 + c0021)) / 2.0;
  const double c1101 = (g[2] * (-c3000 + 3.0 * c2100 - 3.0 * c1200 + c0300) +
                        (-c3000 + 2.0 * c2100 - c1200 + c2001 + c0201)) / 2.0;

  const double c1002 = (c1101 + c1011 + c2001) / 3.0;
  const double c0102 = (c1101 + c0111 + c0201) / 3.0;
  const double c0012 = (c1011 + c0111 + c0021) / 3.0;
  const double c0003 = (c1002 + c0102 + c0012) / 3.0;

  // Coordinates relative to the centroid split: one of b1..b3 is zero.
  const double m = std::min({b[0], b[1], b[2]});
  const double b1 = b[0] - m, b2 = b[1] - m, b3 = b[2] - m, b4 = 3.0 * m;

  return b1 * b1 * b1 * c3000 + 3.0 * b1 * b1 * b2 * c2100 + 3.0 * b1 * b1 * b3 * c2010 +
         3.0 * b1 * b1 * b4 * c2001 + 3.0 * b1 * b2 * b2 * c1200 + 6.0 * b1 * b2 * b4 * c1101 +
         3.0 * b1 * b3 * b3 * c1020 + 6.0 * b1 * b3 * b4 * c1011 + 3.0 * b1 * b4 * b4 * c1002 +
         b2 * b2 * b2 * c0300 + 3.0 * b2 * b2 * b3 * c0210 + 3.0 * b2 * b2 * b4 * c0201 +
         3.0 * b2 * b3 * b3 * c0120 + 6.0 * b2 * b3 * b4 * c0111 + 3.0 * b2 * b4 * b4 * c0102 +
         b3 * b3 * b3 * c0030 + 3.0 * b3 * b3 * b4 * c0021 + 3.0 * b3 * b4 * b4 * c0012 +
         b4 * b4 * b4 * c0003;
}

std::optional<Eigen::RowVectorXd> CloughTocherInterpolator::evaluate(double x, double z) const {
  if (!locator_) return std::nullopt;
  const int t = locator_->locate(x, z);
  if (t < 0) return std::nullopt;
  const auto b = barycentric(points_, tri_.triangles[t], x, z);
  Eigen::RowVectorXd out(values_.cols());
  for (Eigen::Index c = 0; c < values_.cols(); ++c) out[c] = patch(t, static_cast<int>(c), b);
  return out;
}

CubicReconstruction cubic_baseline(const SparseSample& sample) {
  const Eigen::Index n = sample.num_nodes();
  const Matrix coords = sample.graph.coordinates();
  std::vector<int> kept;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sample.keep_mask[i]) kept.push_back(static_cast<int>(i));
  }
  if (kept.empty()) fail(ErrorCode::empty_mask, "cubic_baseline: no retained nodes");

  const auto m = static_cast<Eigen::Index>(kept.size());
  Matrix pts(m, 2);
  Matrix vals(m, 2);
  for (Eigen::Index r = 0; r < m; ++r) {
    pts.row(r) = coords.row(kept[r]);
    vals.row(r) = sample.target_velocities.row(kept[r]);
  }

  auto nearest = [&](Eigen::Index i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < m; ++r) {
      const double d = (pts.row(r) - coords.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    return vals.row(best);
  };

  CubicReconstruction out;
  out.velocities.resize(n, 2);
  const CloughTocherInterpolator interp(pts, vals);
  out.nearest_fallback = !interp.valid();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sample.keep_mask[i]) {
      out.velocities.row(i) = sample.target_velocities.row(i);
      continue;
    }
    std::optional<Eigen::RowVectorXd> v;
    if (!out.nearest_fallback) v = interp.evaluate(coords(i, 0), coords(i, 1));
    if (v) {
      out.velocities.row(i) = *v;
    } else {
      out.velocities.row(i) = nearest(i);
      if (!out.nearest_fallback) ++out.outside_hull;
    }
  }
  return out;
}

}  // namespace flowrec
