#pragma once

// Brute-force reference implementations and random fixtures shared by the
// unit and acceptance tests. Everything here works on dense matrices and
// plain loops so it shares no code paths with the library kernels.

#include "flowrec/graph.hpp"
#include "flowrec/model.hpp"
#include "flowrec/rng.hpp"
#include "flowrec/sparsify.hpp"
#include "flowrec/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace flowrec::testing {

inline FlowSnapshot random_snapshot(int n, Rng& rng, double velocity_scale = 1.0) {
  FlowSnapshot s;
  s.points.resize(n, 2);
  s.velocities.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    s.points(i, 0) = uniform01(rng);
    s.points(i, 1) = uniform01(rng);
    s.velocities(i, 0) = velocity_scale * uniform(rng, -1.0, 1.0);
    s.velocities(i, 1) = velocity_scale * uniform(rng, -1.0, 1.0);
  }
  s.domain_tag = "random";
  return s;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, lo, hi);
  }
  return m;
}

/// k-NN by exhaustive distance sort (ties to the lower index), symmetrized.
/// Returns a 0/1 dense adjacency without self loops.
inline Matrix knn_adjacency_oracle(const Matrix& points, int k) {
  const auto n = points.rows();
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> others;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    std::stable_sort(others.begin(), others.end(), [&](Eigen::Index p, Eigen::Index q) {
      return (points.row(p) - points.row(i)).squaredNorm() <
             (points.row(q) - points.row(i)).squaredNorm();
    });
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), others.size());
    for (std::size_t m = 0; m < take; ++m) {
      a(i, others[m]) = 1.0;
      a(others[m], i) = 1.0;
    }
  }
  return a;
}

inline Matrix dense_adjacency(const FlowGraph& g) {
  Matrix a = Matrix::Zero(g.num_nodes(), g.num_nodes());
  for (Eigen::Index i = 0; i < g.num_nodes(); ++i) {
    for (int j : g.neighbors(i)) a(i, j) = 1.0;
  }
  return a;
}

inline Matrix dense_distance(const FlowGraph& g) {
  Matrix d = Matrix::Zero(g.num_nodes(), g.num_nodes());
  for (Eigen::Index i = 0; i < g.num_nodes(); ++i) {
    const auto nb = g.neighbors(i);
    const auto ds = g.distances(i);
    for (std::size_t m = 0; m < nb.size(); ++m) d(i, nb[m]) = ds[m];
  }
  return d;
}

inline Matrix row_normalize(Matrix a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double s = a.row(i).sum();
    if (s > 0.0) a.row(i) /= s;
  }
  return a;
}

inline Matrix dense_elu(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    y.data()[i] = v > 0.0 ? v : std::expm1(v);
  }
  return y;
}

/// Attention weights alpha(i, j) over j in {i} U N(i); zero elsewhere.
inline Matrix dense_attention(const LayerParams& p, const FlowGraph& g, const Matrix& h) {
  const auto n = g.num_nodes();
  const Matrix z = h * p.weight;
  const auto f = z.cols();
  const Matrix a = dense_adjacency(g) + Matrix::Identity(n, n);
  const Matrix d = dense_distance(g);
  Matrix alpha = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -1e300;
    Matrix e = Matrix::Zero(1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      double s = d(i, j) * p.att(0, 2 * f);
      for (Eigen::Index c = 0; c < f; ++c) s += p.att(0, c) * z(i, c) + p.att(0, f + c) * z(j, c);
      e(0, j) = s > 0.0 ? s : kAttentionSlope * s;
      mx = std::max(mx, e(0, j));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      alpha(i, j) = std::exp(e(0, j) - mx);
      total += alpha(i, j);
    }
    alpha.row(i) /= total;
  }
  return alpha;
}

inline Matrix dense_gat(const LayerParams& p, const FlowGraph& g, const Matrix& h) {
  return dense_elu((dense_attention(p, g, h) * (h * p.weight)).rowwise() + p.bias.row(0));
}

inline Matrix dense_gcn(const LayerParams& p, const FlowGraph& g, const Matrix& h) {
  const auto n = g.num_nodes();
  const Matrix prop = row_normalize(dense_adjacency(g) + Matrix::Identity(n, n));
  return dense_elu((prop * h * p.weight).rowwise() + p.bias.row(0));
}

inline Matrix dense_sage(const LayerParams& p, const FlowGraph& g, const Matrix& h) {
  const Matrix mean = row_normalize(dense_adjacency(g));
  return dense_elu((h * p.weight + mean * h * p.weight_neigh).rowwise() + p.bias.row(0));
}

inline Matrix dense_laplacian(const FlowGraph& g) {
  const auto n = g.num_nodes();
  return Matrix::Identity(n, n) - row_normalize(dense_adjacency(g));
}

/// Whole network on dense operators, from input features to the n x 2 head
/// output (in velocity_scale units).
inline Matrix dense_network(const GacnModel& m, const FlowGraph& g, const Matrix& x) {
  const double alpha = 1.0 / (1.0 + std::exp(-m.diffusion_alpha_raw(0, 0)));
  const Matrix lap = dense_laplacian(g);
  Matrix h = x;
  for (const auto& layer : m.layers) {
    Matrix out;
    switch (m.spec.kind) {
      case LayerKind::attention: out = dense_gat(layer, g, h); break;
      case LayerKind::gcn: out = dense_gcn(layer, g, h); break;
      case LayerKind::mean_aggregator: out = dense_sage(layer, g, h); break;
    }
    if (m.spec.use_diffusion) out = out - alpha * lap * out;
    h = out + (layer.skip_proj ? Matrix(h * *layer.skip_proj) : h);
  }
  return (h * m.head_weight).rowwise() + m.head_bias.row(0);
}

/// Small model whose widths exercise both projected and identity skips.
inline GacnModel small_model(LayerKind kind, std::uint64_t seed,
                             std::vector<int> widths = {5, 4, 4, 3}) {
  ModelSpec spec;
  spec.widths = std::move(widths);
  spec.kind = kind;
  GacnModel m = init_glorot(spec, seed);
  // Non-zero biases and alpha so every parameter has a visible effect.
  Rng rng(mix_seed(seed, 99));
  for (auto& l : m.layers) l.bias = random_matrix(1, l.bias.cols(), rng, -0.3, 0.3);
  m.head_bias = random_matrix(1, 2, rng, -0.3, 0.3);
  m.diffusion_alpha_raw(0, 0) = uniform(rng, -1.0, 1.0);
  return m;
}

/// Random graph of n nodes with a random keep mask; features include
/// random propagated velocities.
struct RandomCase {
  SparseSample sample;
  Matrix propagated;
};

inline RandomCase random_case(int n, int k, Rng& rng) {
  const FlowSnapshot snap = random_snapshot(n, rng);
  const FlowGraph g = build_knn_graph(snap, k);
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n), 0);
  keep[uniform_index(rng, static_cast<std::uint64_t>(n))] = 1;
  for (auto& v : keep) {
    if (uniform01(rng) < 0.3) v = 1;
  }
  RandomCase c{make_sparse_sample(g, keep, snap.velocities,
                                  std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1)),
               random_matrix(n, 2, rng)};
  return c;
}

inline std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  shuffle(p, rng);
  return p;
}

/// Node i of the input becomes node perm[i] of the output.
inline FlowSnapshot permute(const FlowSnapshot& s, const std::vector<int>& perm) {
  FlowSnapshot out = s;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.points.row(perm[i]) = s.points.row(static_cast<Eigen::Index>(i));
    out.velocities.row(perm[i]) = s.velocities.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

inline Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(perm[i]) = m.row(static_cast<Eigen::Index>(i));
  return out;
}

template <typename T>
std::vector<T> permute_vec(const std::vector<T>& v, const std::vector<int>& perm) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[perm[i]] = v[i];
  return out;
}

/// Masked MSE evaluated by loss() at every parameter entry shifted by +-h.
/// Returns the worst relative error between `analytic` and the central
/// difference; denominators are floored at `floor`, which sits above the
/// rounding noise of the difference quotient.
template <typename LossFn>
double max_fd_relative_error(GacnModel& model, const std::vector<Matrix>& analytic, LossFn loss,
                             double h = 1e-5, double floor = 1e-5) {
  double worst = 0.0;
  auto params = parameters(model);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p].value;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = loss(model);
      w.data()[i] = orig - h;
      const double down = loss(model);
      w.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

/// Direct-summation oracles over masked rows.
inline double oracle_mse(const Matrix& p, const Matrix& t, const std::vector<std::uint8_t>& mask) {
  long double s = 0.0L;
  long double count = 0.0L;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (!mask[i]) continue;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const long double d = static_cast<long double>(p(i, c)) - t(i, c);
      s += d * d;
      count += 1.0L;
    }
  }
  return static_cast<double>(s / count);
}

inline double oracle_mae(const Matrix& p, const Matrix& t, const std::vector<std::uint8_t>& mask) {
  long double s = 0.0L;
  long double count = 0.0L;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (!mask[i]) continue;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      s += std::fabs(static_cast<long double>(p(i, c)) - t(i, c));
      count += 1.0L;
    }
  }
  return static_cast<double>(s / count);
}

inline double oracle_rmse(const Matrix& p, const Matrix& t, const std::vector<std::uint8_t>& mask) {
  return std::sqrt(oracle_mse(p, t, mask));
}

inline double oracle_r2(const Matrix& p, const Matrix& t, const std::vector<std::uint8_t>& mask) {
  std::vector<long double> tm, pm;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (!mask[i]) continue;
    tm.push_back(std::hypot(static_cast<long double>(t(i, 0)), static_cast<long double>(t(i, 1))));
    pm.push_back(std::hypot(static_cast<long double>(p(i, 0)), static_cast<long double>(p(i, 1))));
  }
  long double mean = 0.0L;
  for (auto v : tm) mean += v;
  mean /= static_cast<long double>(tm.size());
  long double res = 0.0L, tot = 0.0L;
  for (std::size_t i = 0; i < tm.size(); ++i) {
    res += (tm[i] - pm[i]) * (tm[i] - pm[i]);
    tot += (tm[i] - mean) * (tm[i] - mean);
  }
  return static_cast<double>(1.0L - res / tot);
}

inline double oracle_tv(const Matrix& f) {
  long double s = 0.0L;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      if (i + 1 < f.rows()) s += std::fabs(static_cast<long double>(f(i + 1, j)) - f(i, j));
      if (j + 1 < f.cols()) s += std::fabs(static_cast<long double>(f(i, j + 1)) - f(i, j));
    }
  }
  return static_cast<double>(2.0L * s / static_cast<long double>(f.size()));
}

}  // namespace flowrec::testing
