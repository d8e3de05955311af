#include "flowrec/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace flowrec {

double orient2d(const double* a, const double* b, const double* c) {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

double incircle(const double* a, const double* b, const double* c, const double* d) {
  const double adx = a[0] - d[0], ady = a[1] - d[1];
  const double bdx = b[0] - d[0], bdy = b[1] - d[1];
  const double cdx = c[0] - d[0], cdy = c[1] - d[1];
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
         clift * (adx * bdy - bdx * ady);
}

namespace {

// Same determinant with absolute values; bounds the rounding error.
double incircle_permanent(const double* a, const double* b, const double* c, const double* d) {
  const double adx = a[0] - d[0], ady = a[1] - d[1];
  const double bdx = b[0] - d[0], bdy = b[1] - d[1];
  const double cdx = c[0] - d[0], cdy = c[1] - d[1];
  return (adx * adx + ady * ady) * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) +
         (bdx * bdx + bdy * bdy) * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
         (cdx * cdx + cdy * cdy) * (std::abs(adx * bdy) + std::abs(bdx * ady));
}

std::vector<std::array<int, 3>> compute_neighbors(const std::vector<std::array<int, 3>>& tris,
                                                  std::int64_t n) {
  std::vector<std::array<int, 3>> nb(tris.size(), {-1, -1, -1});
  std::unordered_map<std::int64_t, std::pair<int, int>> open;
  open.reserve(tris.size() * 2);
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
    for (int k = 0; k < 3; ++k) {
      const std::int64_t u = tris[t][(k + 1) % 3];
      const std::int64_t v = tris[t][(k + 2) % 3];
      const std::int64_t key = std::min(u, v) * n + std::max(u, v);
      auto it = open.find(key);
      if (it == open.end()) {
        open.emplace(key, std::make_pair(t, k));
      } else {
        nb[t][k] = it->second.first;
        nb[it->second.first][it->second.second] = t;
        open.erase(it);
      }
    }
  }
  return nb;
}

}  // namespace

Triangulation delaunay(const Matrix& points) {
  if (points.cols() != 2) fail(ErrorCode::shape_mismatch, "delaunay expects n x 2 points");
  const int n = static_cast<int>(points.rows());
  Triangulation out;
  if (n < 3) return out;

  auto p = [&](int i) { return points.row(i).data(); };
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return points(a, 0) < points(b, 0) || (points(a, 0) == points(b, 0) && points(a, 1) < points(b, 1));
  });
  const double span = (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
  const double orient_eps = 1e-12 * span * span;

  int apex = -1;
  for (int m = 2; m < n; ++m) {
    if (std::abs(orient2d(p(order[0]), p(order[1]), p(order[m]))) > orient_eps) {
      apex = m;
      break;
    }
  }
  if (apex < 0) return out;  // collinear

  // Points order[0..apex) are collinear; fan them to the apex.
  auto& tris = out.triangles;
  std::vector<int> hull;
  const int c = order[apex];
  const bool left = orient2d(p(order[0]), p(order[1]), p(c)) > 0.0;
  for (int i = 0; i + 1 < apex; ++i) {
    if (left) {
      tris.push_back({order[i], order[i + 1], c});
    } else {
      tris.push_back({order[i + 1], order[i], c});
    }
  }
  if (left) {
    for (int i = 0; i < apex; ++i) hull.push_back(order[i]);
    hull.push_back(c);
  } else {
    hull.push_back(order[0]);
    hull.push_back(c);
    for (int i = apex - 1; i >= 1; --i) hull.push_back(order[i]);
  }

  // Every later point is lexicographically beyond the current hull.
  std::vector<char> visible;
  for (int m = apex + 1; m < n; ++m) {
    const int q = order[m];
    const int h = static_cast<int>(hull.size());
    visible.assign(h, 0);
    bool any = false;
    for (int i = 0; i < h; ++i) {
      visible[i] = orient2d(p(hull[i]), p(hull[(i + 1) % h]), p(q)) < -orient_eps;
      any = any || visible[i];
    }
    if (!any) continue;  // numerically on the hull; leave it out
    int first = 0;
    while (!(visible[first] && !visible[(first + h - 1) % h])) ++first;
    int last = first;
    while (visible[(last + 1) % h]) last = (last + 1) % h;
    for (int i = first;; i = (i + 1) % h) {
      tris.push_back({hull[(i + 1) % h], hull[i], q});
      if (i == last) break;
    }
    std::vector<int> next;
    for (int i = (last + 1) % h;; i = (i + 1) % h) {
      next.push_back(hull[i]);
      if (i == first) break;
    }
    next.push_back(q);
    hull = std::move(next);
  }

  // Lawson flips until every interior edge is locally Delaunay.
  const int max_passes = 10 * static_cast<int>(tris.size()) + 100;
  for (int pass = 0; pass < max_passes; ++pass) {
    const auto nb = compute_neighbors(tris, n);
    std::vector<char> touched(tris.size(), 0);
    bool changed = false;
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (touched[t]) continue;
      for (int k = 0; k < 3; ++k) {
        const int u = nb[t][k];
        if (u < 0 || touched[u]) continue;
        const int a = tris[t][k];
        const int b = tris[t][(k + 1) % 3];
        const int cc = tris[t][(k + 2) % 3];
        int d = -1;
        for (int v : tris[u]) {
          if (v != b && v != cc) d = v;
        }
        const double det = incircle(p(a), p(b), p(cc), p(d));
        if (det > 1e-10 * incircle_permanent(p(a), p(b), p(cc), p(d))) {
          tris[t] = {a, b, d};
          tris[u] = {a, d, cc};
          touched[t] = touched[u] = 1;
          changed = true;
          break;
        }
      }
    }
    if (!changed) break;
  }

  out.neighbors = compute_neighbors(tris, n);
  out.hull = std::move(hull);
  return out;
}

std::array<double, 3> barycentric(const Matrix& points, const std::array<int, 3>& tri, double x,
                                  double z) {
  const double* a = points.row(tri[0]).data();
  const double* b = points.row(tri[1]).data();
  const double* c = points.row(tri[2]).data();
  const double q[2] = {x, z};
  const double area = orient2d(a, b, c);
  const double l0 = orient2d(q, b, c) / area;
  const double l1 = orient2d(a, q, c) / area;
  return {l0, l1, 1.0 - l0 - l1};
}

TriangleLocator::TriangleLocator(const Matrix& points, const Triangulation& tri)
    : points_(&points), tri_(&tri) {
  if (tri.empty()) return;
  const double xmin = points.col(0).minCoeff(), xmax = points.col(0).maxCoeff();
  const double zmin = points.col(1).minCoeff(), zmax = points.col(1).maxCoeff();
  const double extent = std::max(xmax - xmin, zmax - zmin);
  const double per_side = std::max(1.0, std::sqrt(static_cast<double>(tri.triangles.size())));
  x0_ = xmin;
  z0_ = zmin;
  cell_ = extent > 0.0 ? extent / per_side : 1.0;
  nx_ = static_cast<int>((xmax - xmin) / cell_) + 1;
  nz_ = static_cast<int>((zmax - zmin) / cell_) + 1;
  buckets_.assign(static_cast<std::size_t>(nx_) * nz_, {});
  for (int t = 0; t < static_cast<int>(tri.triangles.size()); ++t) {
    double bx0 = xmax, bx1 = xmin, bz0 = zmax, bz1 = zmin;
    for (int v : tri.triangles[t]) {
      bx0 = std::min(bx0, points(v, 0));
      bx1 = std::max(bx1, points(v, 0));
      bz0 = std::min(bz0, points(v, 1));
      bz1 = std::max(bz1, points(v, 1));
    }
    const int ix0 = std::clamp(static_cast<int>((bx0 - x0_) / cell_), 0, nx_ - 1);
    const int ix1 = std::clamp(static_cast<int>((bx1 - x0_) / cell_), 0, nx_ - 1);
    const int iz0 = std::clamp(static_cast<int>((bz0 - z0_) / cell_), 0, nz_ - 1);
    const int iz1 = std::clamp(static_cast<int>((bz1 - z0_) / cell_), 0, nz_ - 1);
    for (int iz = iz0; iz <= iz1; ++iz) {
      for (int ix = ix0; ix <= ix1; ++ix) buckets_[static_cast<std::size_t>(iz) * nx_ + ix].push_back(t);
    }
  }
}

int TriangleLocator::locate(double x, double z) const {
  if (buckets_.empty()) return -1;
  const double fx = (x - x0_) / cell_;
  const double fz = (z - z0_) / cell_;
  if (fx < -1e-9 || fz < -1e-9 || fx > nx_ + 1e-9 || fz > nz_ + 1e-9) return -1;
  const int ix = std::clamp(static_cast<int>(fx), 0, nx_ - 1);
  const int iz = std::clamp(static_cast<int>(fz), 0, nz_ - 1);
  constexpr double tol = -1e-12;
  for (int t : buckets_[static_cast<std::size_t>(iz) * nx_ + ix]) {
    const auto b = barycentric(*points_, tri_->triangles[t], x, z);
    if (b[0] >= tol && b[1] >= tol && b[2] >= tol) return t;
  }
  return -1;
}

}  // namespace flowrec
