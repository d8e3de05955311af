#include "flowrec/featprop.hpp"
#include "flowrec/sparsify.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace flowrec;
using namespace flowrec::testing;

namespace {

FlowSnapshot grid_snapshot(int p, int q, double dx = 1.0, double dz = 1.0) {
  FlowSnapshot s;
  s.points.resize(static_cast<Eigen::Index>(p) * q, 2);
  s.velocities.resize(s.points.rows(), 2);
  Eigen::Index i = 0;
  for (int b = 0; b < q; ++b) {
    for (int a = 0; a < p; ++a) {
      s.points(i, 0) = 0.1 + a * dx;
      s.points(i, 1) = -0.2 + b * dz;
      s.velocities(i, 0) = a + 10.0 * b;
      s.velocities(i, 1) = -a;
      ++i;
    }
  }
  return s;
}

FlowSnapshot path3() {
  FlowSnapshot s;
  s.points = (Matrix(3, 2) << 0, 0, 1, 0, 2, 0).finished();
  s.velocities = Matrix::Zero(3, 2);
  return s;
}

}  // namespace

TEST(MaskRandom, OneNodeOfHundred) {
  Rng rng(1);
  const auto g = build_knn_graph(random_snapshot(100, rng), 4);
  const auto s = mask_random(g, 0.01, 9);
  EXPECT_EQ(s.kept(), 1u);
  EXPECT_EQ(s.graph.node_features().col(feature::bi).sum(), 1.0);
}

TEST(MaskRandom, FeaturesZeroedOffMask) {
  Rng rng(2);
  const auto g = build_knn_graph(random_snapshot(200, rng), 4);
  const auto s = mask_random(g, 0.1, 3);
  EXPECT_EQ(s.kept(), 20u);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const auto f = s.graph.node_features().row(i);
    if (s.keep_mask[i]) {
      EXPECT_EQ(f(feature::ux), g.node_features()(i, feature::ux));
      EXPECT_EQ(f(feature::bi), 1.0);
    } else {
      EXPECT_EQ(f(feature::ux), 0.0);
      EXPECT_EQ(f(feature::uz), 0.0);
      EXPECT_EQ(f(feature::bi), 0.0);
    }
    EXPECT_EQ(f(feature::x), g.node_features()(i, feature::x));
    EXPECT_EQ(s.target_velocities.row(i), g.node_features().row(i).leftCols(2));
  }
}

TEST(MaskRandom, KeepAllIsIdentity) {
  Rng rng(4);
  const auto g = build_knn_graph(random_snapshot(30, rng), 4);
  const auto s = mask_random(g, 1.0, 3);
  EXPECT_EQ(s.graph.node_features(), g.node_features());
  EXPECT_EQ(s.kept(), 30u);
}

TEST(MaskRandom, SeededDeterminism) {
  Rng rng(5);
  const auto g = build_knn_graph(random_snapshot(500, rng), 4);
  EXPECT_EQ(mask_random(g, 0.05, 42).keep_mask, mask_random(g, 0.05, 42).keep_mask);
  EXPECT_NE(mask_random(g, 0.05, 42).keep_mask, mask_random(g, 0.05, 43).keep_mask);
}

TEST(MaskRandom, RejectsEmptyOrInvalid) {
  Rng rng(6);
  const auto g = build_knn_graph(random_snapshot(20, rng), 4);
  EXPECT_THROW(mask_random(g, 0.01, 1), Error);
  EXPECT_THROW(mask_random(g, 0.0, 1), Error);
  EXPECT_THROW(mask_random(g, 1.5, 1), Error);
}

TEST(RefineGrid, ThreeByThreeRefineTwo) {
  const auto s = grid_snapshot(3, 3, 0.5, 2.0);
  const auto r = refine_grid(s, 2);
  EXPECT_EQ(r.nx, 5);
  EXPECT_EQ(r.nz, 5);
  EXPECT_EQ(r.snapshot.size(), 25);
  EXPECT_EQ(std::count(r.snapshot.mask.begin(), r.snapshot.mask.end(), 1), 9);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const int idx = r.origin_index[i];
    EXPECT_EQ(r.snapshot.points.row(idx), s.points.row(i));
    EXPECT_EQ(r.snapshot.velocities.row(idx), s.velocities.row(i));
  }
  for (Eigen::Index i = 0; i < 25; ++i) {
    if (!r.snapshot.mask[i]) {
      EXPECT_EQ(r.snapshot.velocities.row(i).squaredNorm(), 0.0);
    }
  }
  // Inserted node between (0.1,-0.2) and (0.6,-0.2).
  EXPECT_NEAR(r.snapshot.points(1, 0), 0.35, 1e-15);
  EXPECT_NEAR(r.snapshot.points(1, 1), -0.2, 1e-15);
}

TEST(RefineGrid, FullResolutionPanel) {
  const auto s = grid_snapshot(39, 39, 0.01, 0.01);
  const auto r = refine_grid(s, kDefaultRefine);
  EXPECT_EQ(r.snapshot.size(), 267 * 267);
}

TEST(RefineGrid, RefineOneIsIdentity) {
  const auto s = grid_snapshot(4, 3);
  const auto out = insert_intermediate_nodes(s, 1);
  EXPECT_EQ(out.points, s.points);
  EXPECT_EQ(out.velocities, s.velocities);
}

TEST(RefineGrid, ShuffledInputStillMapsBack) {
  auto s = grid_snapshot(5, 4, 0.3, 0.7);
  Rng rng(3);
  s = permute(s, random_permutation(static_cast<int>(s.size()), rng));
  const auto r = refine_grid(s, 3);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    EXPECT_EQ(r.snapshot.points.row(r.origin_index[i]), s.points.row(i));
  }
}

TEST(RefineGrid, RejectsScatteredPoints) {
  Rng rng(7);
  try {
    refine_grid(random_snapshot(16, rng), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_a_grid);
  }
}

TEST(SplitHalf, Counts) {
  const auto even = split_half(grid_snapshot(5, 2), 1);
  EXPECT_EQ(even.input.size(), 5u);
  EXPECT_EQ(even.eval.size(), 5u);
  const auto odd = split_half(grid_snapshot(11, 1), 1);
  EXPECT_EQ(odd.input.size(), 6u);
  EXPECT_EQ(odd.eval.size(), 5u);
}

TEST(SplitHalf, DisjointCoverAndDeterministic) {
  FlowSnapshot s;
  Rng rng(12);
  s = random_snapshot(11, rng);
  const auto a = split_half(s, 5);
  EXPECT_EQ(a.input.size(), 6u);
  EXPECT_EQ(a.eval.size(), 5u);
  std::set<int> all(a.input.begin(), a.input.end());
  for (int i : a.eval) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 11u);
  const auto b = split_half(s, 5);
  EXPECT_EQ(a.input, b.input);
  EXPECT_EQ(a.eval, b.eval);
}

TEST(SuperResolution, ValidFractionAndDisjointMasks) {
  const auto s = grid_snapshot(39, 39, 0.01, 0.01);
  const auto c = super_resolution_case(s, 7, 3, kDefaultNeighbors);
  const double frac = static_cast<double>(c.sample.kept()) / static_cast<double>(c.sample.num_nodes());
  EXPECT_GE(frac, 0.008);
  EXPECT_LE(frac, 0.013);
  for (Eigen::Index i = 0; i < c.sample.num_nodes(); ++i) {
    EXPECT_FALSE(c.sample.keep_mask[i] && c.sample.eval_mask[i]);
  }
  EXPECT_EQ(std::count(c.sample.eval_mask.begin(), c.sample.eval_mask.end(), 1), 760);
}

TEST(FeaturePropagation, ConstantKnownValuesSpread) {
  Rng rng(13);
  const auto g = build_knn_graph(random_snapshot(80, rng), 6);
  std::vector<std::uint8_t> keep(80, 0);
  keep[3] = keep[40] = keep[77] = 1;
  Matrix target = Matrix::Zero(80, 2);
  target.col(0).setConstant(2.5);
  target.col(1).setConstant(-1.0);
  const auto s = make_sparse_sample(g, keep, target, std::vector<std::uint8_t>(80, 1));
  PropagationOptions opt;
  opt.max_iters = 5000;
  opt.tol = 1e-12;
  const auto r = propagate_features(s, rw_adjacency(g), opt);
  EXPECT_LT((r.velocities - target).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FeaturePropagation, PathMidpoint) {
  const auto g = build_knn_graph(path3(), 1, 1.0);
  Matrix target(3, 2);
  target << 1.5, -2.0, 0.0, 0.0, 4.0, 7.0;
  const auto s = make_sparse_sample(g, {1, 0, 1}, target, {1, 1, 1});
  const auto r = propagate_features(s, rw_adjacency(g));
  EXPECT_NEAR(r.velocities(1, 0), (1.5 + 4.0) / 2.0, 1e-6);
  EXPECT_NEAR(r.velocities(1, 1), (-2.0 + 7.0) / 2.0, 1e-6);
}

TEST(FeaturePropagation, KeepAllStopsAfterOneIteration) {
  Rng rng(14);
  const auto g = build_knn_graph(random_snapshot(30, rng), 4);
  const auto s = mask_random(g, 1.0, 1);
  const auto r = propagate_features(s, rw_adjacency(g));
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.velocities, s.target_velocities);
}

TEST(FeaturePropagation, ClampingBoundAndEnergy) {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = build_knn_graph(random_snapshot(60, rng), 5);
    const auto s = mask_random(g, 0.1, static_cast<std::uint64_t>(trial));
    const Matrix known = s.known_velocities();
    double lo[2] = {1e300, 1e300}, hi[2] = {-1e300, -1e300};
    for (Eigen::Index i = 0; i < 60; ++i) {
      if (!s.keep_mask[i]) continue;
      for (int c = 0; c < 2; ++c) {
        lo[c] = std::min(lo[c], known(i, c));
        hi[c] = std::max(hi[c], known(i, c));
      }
    }
    double previous = dirichlet_energy(g, known);
    PropagationOptions opt;
    opt.max_iters = 60;
    opt.tol = 0.0;
    opt.on_iteration = [&](int, const Matrix& h) {
      for (Eigen::Index i = 0; i < 60; ++i) {
        if (s.keep_mask[i]) {
          EXPECT_EQ(h.row(i), known.row(i));
        } else {
          for (int c = 0; c < 2; ++c) {
            EXPECT_GE(h(i, c), lo[c] - 1e-12);
            EXPECT_LE(h(i, c), hi[c] + 1e-12);
          }
        }
      }
      const double e = dirichlet_energy(g, h);
      EXPECT_LE(e, previous + 1e-9);
      previous = e;
    };
    propagate_features(s, rw_adjacency(g), opt);
  }
}

TEST(FeaturePropagation, RejectsLaplacian) {
  Rng rng(16);
  const auto g = build_knn_graph(random_snapshot(10, rng), 3);
  EXPECT_THROW(propagate_features(mask_random(g, 0.5, 1), rw_laplacian(g)), Error);
}

TEST(DirichletEnergy, Examples) {
  const auto g2 = build_knn_graph(path3(), 1, 1.0);
  EXPECT_EQ(dirichlet_energy(g2, Matrix::Constant(3, 2, 4.0)), 0.0);
  FlowSnapshot two;
  two.points = (Matrix(2, 2) << 0, 0, 1, 0).finished();
  two.velocities = Matrix::Zero(2, 2);
  const auto g = build_knn_graph(two, 1, 1.0);
  EXPECT_DOUBLE_EQ(dirichlet_energy(g, (Matrix(2, 1) << 0, 1).finished()), 0.5);
  Rng rng(17);
  const auto gr = build_knn_graph(random_snapshot(30, rng), 4);
  const Matrix h = random_matrix(30, 2, rng);
  EXPECT_NEAR(dirichlet_energy(gr, 3.0 * h), 9.0 * dirichlet_energy(gr, h), 1e-10);
}
