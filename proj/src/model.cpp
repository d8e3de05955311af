#include "flowrec/model.hpp"

#include "flowrec/rng.hpp"

#include <algorithm>
#include <cmath>

namespace flowrec {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::attention: return "attention";
    case LayerKind::gcn: return "gcn";
    case LayerKind::mean_aggregator: return "mean_aggregator";
  }
  return "attention";
}

LayerKind parse_layer_kind(std::string_view text) {
  if (text == "attention" || text == "gat") return LayerKind::attention;
  if (text == "gcn") return LayerKind::gcn;
  if (text == "mean_aggregator" || text == "sage") return LayerKind::mean_aggregator;
  fail(ErrorCode::invalid_argument, "unknown layer kind '" + std::string(text) + "'");
}

double GacnModel::alpha() const {
  return 1.0 / (1.0 + std::exp(-diffusion_alpha_raw(0, 0)));
}

std::vector<ParamRef> parameters(GacnModel& model) {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.push_back({prefix + "weight", &layer.weight});
    if (layer.weight_neigh.size() > 0) out.push_back({prefix + "weight_neigh", &layer.weight_neigh});
    if (layer.att.size() > 0) out.push_back({prefix + "att", &layer.att});
    out.push_back({prefix + "bias", &layer.bias});
    if (layer.skip_proj) out.push_back({prefix + "skip_proj", &*layer.skip_proj});
  }
  out.push_back({"diffusion_alpha_raw", &model.diffusion_alpha_raw});
  out.push_back({"head.weight", &model.head_weight});
  out.push_back({"head.bias", &model.head_bias});
  return out;
}

std::vector<ConstParamRef> parameters(const GacnModel& model) {
  std::vector<ConstParamRef> out;
  for (auto& p : parameters(const_cast<GacnModel&>(model))) out.push_back({p.name, p.value});
  return out;
}

std::int64_t param_count(const GacnModel& model) {
  std::int64_t total = 0;
  for (const auto& p : parameters(model)) total += p.value->size();
  return total;
}

GacnModel init_glorot(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.widths.size() < 2) fail(ErrorCode::invalid_argument, "model needs at least one layer");
  if (spec.widths.front() != feature::count) {
    fail(ErrorCode::invalid_argument, "first width must equal the 5 input features");
  }
  for (int w : spec.widths) {
    if (w < 1) fail(ErrorCode::invalid_argument, "layer widths must be positive");
  }
  Rng rng(seed);
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -bound, bound);
    return m;
  };
  auto glorot2 = [&glorot](Eigen::Index rows, Eigen::Index cols) {
    return glorot(rows, cols, static_cast<double>(rows), static_cast<double>(cols));
  };

  GacnModel model;
  model.spec = spec;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int fin = spec.widths[l];
    const int fout = spec.widths[l + 1];
    LayerParams layer;
    layer.weight = glorot2(fin, fout);
    if (spec.kind == LayerKind::mean_aggregator) layer.weight_neigh = glorot2(fin, fout);
    if (spec.kind == LayerKind::attention) {
      layer.att = glorot(1, 2 * fout + 1, 2.0 * fout + 1.0, 1.0);
    }
    layer.bias = Matrix::Zero(1, fout);
    if (fin != fout) layer.skip_proj = glorot2(fin, fout);
    model.layers.push_back(std::move(layer));
  }
  model.diffusion_alpha_raw = Matrix::Zero(1, 1);
  model.head_weight = glorot2(spec.widths.back(), 2);
  model.head_bias = Matrix::Zero(1, 2);
  return model;
}

AttentionNeighborhood AttentionNeighborhood::from_graph(const FlowGraph& graph) {
  AttentionNeighborhood nb;
  const auto n = graph.num_nodes();
  nb.offsets.reserve(static_cast<std::size_t>(n) + 1);
  nb.source.reserve(graph.num_directed_edges() + static_cast<std::size_t>(n));
  nb.distance.reserve(nb.source.capacity());
  nb.offsets.push_back(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    nb.source.push_back(static_cast<int>(i));
    nb.distance.push_back(0.0);
    const auto nbrs = graph.neighbors(i);
    const auto dist = graph.distances(i);
    nb.source.insert(nb.source.end(), nbrs.begin(), nbrs.end());
    nb.distance.insert(nb.distance.end(), dist.begin(), dist.end());
    nb.offsets.push_back(static_cast<std::int64_t>(nb.source.size()));
  }
  return nb;
}

GraphContext GraphContext::build(const FlowGraph& graph, LayerKind kind) {
  GraphContext ctx;
  ctx.num_nodes = graph.num_nodes();
  ctx.laplacian = rw_laplacian(graph).matrix;
  switch (kind) {
    case LayerKind::attention: ctx.neighborhood = AttentionNeighborhood::from_graph(graph); break;
    case LayerKind::gcn: ctx.gcn_propagation = flowrec::gcn_propagation(graph); break;
    case LayerKind::mean_aggregator: ctx.neighbor_mean = flowrec::neighbor_mean(graph); break;
  }
  return ctx;
}

namespace {

struct AttentionState {
  std::vector<double> pre;    // score before LeakyReLU, per neighborhood entry
  std::vector<double> alpha;  // softmax weights
};

AttentionState attention_state(const Matrix& z, const Matrix& att, const AttentionNeighborhood& nb) {
  const auto f = z.cols();
  if (att.rows() != 1 || att.cols() != 2 * f + 1) {
    fail(ErrorCode::shape_mismatch, "attention vector must have length 2 * F_out + 1");
  }
  if (nb.num_nodes() != z.rows()) fail(ErrorCode::shape_mismatch, "neighborhood size mismatch");
  const Vector s_dst = z * att.leftCols(f).transpose();
  const Vector s_src = z * att.middleCols(f, f).transpose();
  const double a_dist = att(0, 2 * f);

  AttentionState st;
  st.pre.resize(nb.source.size());
  st.alpha.resize(nb.source.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto begin = nb.offsets[i];
    const auto end = nb.offsets[i + 1];
    double top = -std::numeric_limits<double>::infinity();
    for (auto e = begin; e < end; ++e) {
      st.pre[e] = s_dst(i) + s_src(nb.source[e]) + a_dist * nb.distance[e];
      st.alpha[e] = ad::leaky_relu(st.pre[e], kAttentionSlope);
      top = std::max(top, st.alpha[e]);
    }
    if (!std::isfinite(top)) {
      fail(ErrorCode::non_finite, "non-finite attention score at node " + std::to_string(i));
    }
    for (auto e = begin; e < end; ++e) st.alpha[e] -= top;
  }
  // Scalar exp on purpose: a vectorized exp over a std::vector rounds the
  // unaligned head differently, which made runs depend on heap addresses.
  for (double& a : st.alpha) a = std::exp(a);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto begin = nb.offsets[i];
    const auto end = nb.offsets[i + 1];
    double total = 0.0;
    for (auto e = begin; e < end; ++e) total += st.alpha[e];
    for (auto e = begin; e < end; ++e) st.alpha[e] /= total;
  }
  return st;
}

}  // namespace

namespace ops {

ad::Var attention_aggregate(ad::Tape& tape, ad::Var z, ad::Var att, const AttentionNeighborhood& nb) {
  const Matrix& zv = tape.value(z);
  AttentionState st = attention_state(zv, tape.value(att), nb);
  const auto f = zv.cols();
  Matrix out = Matrix::Zero(zv.rows(), f);
  for (Eigen::Index i = 0; i < zv.rows(); ++i) {
    double* o = out.row(i).data();
    for (auto e = nb.offsets[i]; e < nb.offsets[i + 1]; ++e) {
      const double a = st.alpha[e];
      const double* zj = zv.row(nb.source[e]).data();
      for (Eigen::Index c = 0; c < f; ++c) o[c] += a * zj[c];
    }
  }
  const bool grad = tape.requires_grad(z) || tape.requires_grad(att);
  return tape.push(std::move(out), grad, [z, att, &nb, st = std::move(st)](ad::Tape& t, const Matrix& g) {
    const Matrix& zv = t.value(z);
    const Matrix& av = t.value(att);
    const auto n = zv.rows();
    const auto f = zv.cols();
    Matrix dz = Matrix::Zero(n, f);
    Vector ds_dst = Vector::Zero(n);
    Vector ds_src = Vector::Zero(n);
    double d_dist = 0.0;
    std::vector<double> dalpha;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto begin = nb.offsets[i];
      const auto end = nb.offsets[i + 1];
      const double* gi = g.row(i).data();
      dalpha.resize(static_cast<std::size_t>(end - begin));
      double weighted = 0.0;
      for (auto e = begin; e < end; ++e) {
        const int j = nb.source[e];
        const double* zj = zv.row(j).data();
        double* dzj = dz.row(j).data();
        const double a = st.alpha[e];
        double dot = 0.0;
        for (Eigen::Index c = 0; c < f; ++c) {
          dot += gi[c] * zj[c];
          dzj[c] += a * gi[c];
        }
        dalpha[e - begin] = dot;
        weighted += a * dot;
      }
      for (auto e = begin; e < end; ++e) {
        const double dscore = st.alpha[e] * (dalpha[e - begin] - weighted);
        const double dpre = dscore * (st.pre[e] > 0.0 ? 1.0 : kAttentionSlope);
        ds_dst(i) += dpre;
        ds_src(nb.source[e]) += dpre;
        d_dist += dpre * nb.distance[e];
      }
    }
    if (t.requires_grad(att)) {
      Matrix datt(1, 2 * f + 1);
      datt.leftCols(f).noalias() = ds_dst.transpose() * zv;
      datt.middleCols(f, f).noalias() = ds_src.transpose() * zv;
      datt(0, 2 * f) = d_dist;
      t.accumulate(att, std::move(datt));
    }
    if (t.requires_grad(z)) {
      dz.noalias() += ds_dst * av.leftCols(f);
      dz.noalias() += ds_src * av.middleCols(f, f);
      t.accumulate(z, std::move(dz));
    }
  });
}

ad::Var bias_elu(ad::Tape& tape, ad::Var a, ad::Var bias) {
  const Matrix& x = tape.value(a);
  const Matrix& b = tape.value(bias);
  if (b.rows() != 1 || b.cols() != x.cols()) fail(ErrorCode::shape_mismatch, "bias must be 1 x F");
  const Matrix v = x.rowwise() + b.row(0);
  // exp(v) on the negative side; also the derivative there.
  Matrix slope = v.array().min(0.0).exp().matrix();
  Matrix out = (v.array() > 0.0).select(v.array(), slope.array() - 1.0).matrix();
  slope = (v.array() > 0.0).select(1.0, slope.array()).matrix();
  const bool grad = tape.requires_grad(a) || tape.requires_grad(bias);
  return tape.push(std::move(out), grad, [a, bias, slope = std::move(slope)](ad::Tape& t, const Matrix& g) {
    Matrix d = g.cwiseProduct(slope);
    if (t.requires_grad(bias)) t.accumulate_expr(bias, d.colwise().sum());
    t.accumulate(a, std::move(d));
  });
}

ad::Var diffusion(ad::Tape& tape, ad::Var h, const SparseMatrix& laplacian, ad::Var alpha) {
  const Matrix& x = tape.value(h);
  const double a = tape.value(alpha)(0, 0);
  Matrix lx = ad::sparse_times(laplacian, x);
  Matrix out = x - a * lx;
  const bool grad = tape.requires_grad(h) || tape.requires_grad(alpha);
  return tape.push(std::move(out), grad,
                   [h, alpha, a, &laplacian, lx = std::move(lx)](ad::Tape& t, const Matrix& g) {
                     if (t.requires_grad(alpha)) {
                       Matrix da(1, 1);
                       da(0, 0) = -(lx.array() * g.array()).sum();
                       t.accumulate(alpha, std::move(da));
                     }
                     if (t.requires_grad(h)) {
                       Matrix dh = ad::sparse_transpose_times(laplacian, g);
                       dh = g - a * dh;
                       t.accumulate(h, std::move(dh));
                     }
                   });
}

ad::Var layer(ad::Tape& tape, const GraphContext& ctx, LayerKind kind, ad::Var h, ad::Var weight,
              ad::Var weight_neigh, ad::Var att, ad::Var bias) {
  ad::Var pre;
  switch (kind) {
    case LayerKind::attention: {
      const auto z = ad::matmul(tape, h, weight);
      pre = attention_aggregate(tape, z, att, ctx.neighborhood);
      break;
    }
    case LayerKind::gcn: {
      const auto z = ad::matmul(tape, h, weight);
      pre = ad::spmm(tape, ctx.gcn_propagation, z);
      break;
    }
    case LayerKind::mean_aggregator: {
      const auto self = ad::matmul(tape, h, weight);
      const auto neigh = ad::spmm(tape, ctx.neighbor_mean, ad::matmul(tape, h, weight_neigh));
      pre = ad::add(tape, self, neigh);
      break;
    }
  }
  return bias_elu(tape, pre, bias);
}

}  // namespace ops

namespace {

void check_layer_shapes(const LayerParams& params, const Matrix& h, LayerKind kind) {
  if (h.cols() != params.in_width()) {
    fail(ErrorCode::shape_mismatch, "feature width " + std::to_string(h.cols()) +
                                        " does not match layer input width " +
                                        std::to_string(params.in_width()));
  }
  if (params.bias.rows() != 1 || params.bias.cols() != params.out_width()) {
    fail(ErrorCode::shape_mismatch, "bias must be 1 x F_out");
  }
  if (kind == LayerKind::mean_aggregator &&
      (params.weight_neigh.rows() != params.in_width() ||
       params.weight_neigh.cols() != params.out_width())) {
    fail(ErrorCode::shape_mismatch, "mean aggregator needs a neighbor weight of the same shape");
  }
}

Matrix single_layer(const LayerParams& params, const FlowGraph& graph, const Matrix& h,
                    LayerKind kind) {
  if (h.rows() != graph.num_nodes()) fail(ErrorCode::shape_mismatch, "feature rows != nodes");
  check_layer_shapes(params, h, kind);
  const GraphContext ctx = GraphContext::build(graph, kind);
  ad::Tape tape;
  const auto hv = tape.leaf(h);
  const auto w = tape.leaf(params.weight);
  const auto wn = tape.leaf(params.weight_neigh);
  const auto a = tape.leaf(params.att);
  const auto b = tape.leaf(params.bias);
  return tape.value(ops::layer(tape, ctx, kind, hv, w, wn, a, b));
}

}  // namespace

AttentionCoefficients attention_coefficients(const LayerParams& params, const FlowGraph& graph,
                                             const Matrix& h) {
  check_layer_shapes(params, h, LayerKind::attention);
  const auto nb = AttentionNeighborhood::from_graph(graph);
  const Matrix z = h * params.weight;
  auto st = attention_state(z, params.att, nb);
  return AttentionCoefficients{nb.offsets, nb.source, std::move(st.alpha)};
}

Matrix gat_layer_forward(const LayerParams& params, const FlowGraph& graph, const Matrix& h) {
  return single_layer(params, graph, h, LayerKind::attention);
}

Matrix gcn_layer_forward(const LayerParams& params, const FlowGraph& graph, const Matrix& h) {
  return single_layer(params, graph, h, LayerKind::gcn);
}

Matrix sage_layer_forward(const LayerParams& params, const FlowGraph& graph, const Matrix& h) {
  return single_layer(params, graph, h, LayerKind::mean_aggregator);
}

Matrix laplacian_diffusion(const Matrix& h, const SparseOperator& laplacian, double alpha) {
  if (laplacian.kind != OperatorKind::rw_laplacian) {
    fail(ErrorCode::invalid_argument, "diffusion needs a random-walk Laplacian");
  }
  return h - alpha * laplacian.apply(h);
}

Matrix build_input_features(const GacnModel& model, const SparseSample& sample,
                            const Matrix& propagated) {
  const auto n = sample.num_nodes();
  if (propagated.rows() != n || propagated.cols() != 2) {
    fail(ErrorCode::shape_mismatch, "propagated velocities must be n x 2");
  }
  Matrix x = sample.graph.node_features();
  x.leftCols(2) = propagated / model.velocity_scale;
  if (!model.spec.use_bi) x.col(feature::bi).setOnes();
  return x;
}

ForwardTrace trace_forward(const GacnModel& model, const GraphContext& ctx,
                           const Matrix& input_features, bool requires_grad) {
  if (input_features.rows() != ctx.num_nodes || input_features.cols() != model.spec.widths.front()) {
    fail(ErrorCode::shape_mismatch, "input features must be n x " +
                                        std::to_string(model.spec.widths.front()));
  }
  ForwardTrace tr;
  auto& tape = tr.tape;
  for (const auto& p : parameters(model)) tr.params.push_back(tape.leaf(*p.value, requires_grad));

  std::size_t slot = 0;
  auto next = [&tr, &slot]() { return tr.params[slot++]; };
  const ad::Var unused{};

  struct LayerVars {
    ad::Var weight, weight_neigh, att, bias, skip;
  };
  std::vector<LayerVars> vars;
  for (const auto& layer : model.layers) {
    LayerVars v{next(), unused, unused, unused, unused};
    if (layer.weight_neigh.size() > 0) v.weight_neigh = next();
    if (layer.att.size() > 0) v.att = next();
    v.bias = next();
    if (layer.skip_proj) v.skip = next();
    vars.push_back(v);
  }
  const ad::Var alpha_raw = next();
  const ad::Var head_w = next();
  const ad::Var head_b = next();

  ad::Var h = tape.leaf(input_features);
  const ad::Var alpha = ad::sigmoid(tape, alpha_raw);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& v = vars[l];
    check_layer_shapes(model.layers[l], tape.value(h), model.spec.kind);
    ad::Var out = ops::layer(tape, ctx, model.spec.kind, h, v.weight, v.weight_neigh, v.att, v.bias);
    if (model.spec.use_diffusion) {
      out = ops::diffusion(tape, out, ctx.laplacian, alpha);
    }
    const ad::Var skip = v.skip.valid() ? ad::matmul(tape, h, v.skip) : h;
    h = ad::add(tape, out, skip);
    if (!tape.value(h).allFinite()) {
      fail(ErrorCode::non_finite, "non-finite activation after layer " + std::to_string(l));
    }
  }
  tr.output = ad::add_bias(tape, ad::matmul(tape, h, head_w), head_b);
  return tr;
}

Matrix gacn_forward(const GacnModel& model, const SparseSample& sample, const Matrix& propagated) {
  const GraphContext ctx = GraphContext::build(sample.graph, model.spec.kind);
  const Matrix x = build_input_features(model, sample, propagated);
  auto tr = trace_forward(model, ctx, x, false);
  return tr.tape.value(tr.output) * model.velocity_scale;
}

}  // namespace flowrec
