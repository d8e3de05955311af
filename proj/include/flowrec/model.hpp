#pragma once

#include "flowrec/autodiff.hpp"
#include "flowrec/graph.hpp"
#include "flowrec/sparsify.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowrec {

enum class LayerKind { attention, gcn, mean_aggregator };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

inline constexpr double kAttentionSlope = 0.2;

/// Trainable tensors of one message-passing layer.
///   attention:       weight (F_in x F_out), att (1 x 2F_out+1), bias
///   gcn:             weight, bias
///   mean_aggregator: weight (self half), weight_neigh (neighbor half), bias
/// skip_proj (F_in x F_out) is present whenever F_in != F_out.
struct LayerParams {
  Matrix weight;
  Matrix weight_neigh;
  Matrix att;
  Matrix bias;  // 1 x F_out
  std::optional<Matrix> skip_proj;

  Eigen::Index in_width() const { return weight.rows(); }
  Eigen::Index out_width() const { return weight.cols(); }
};

struct ModelSpec {
  std::vector<int> widths{5, 8, 16, 32, 64, 128, 256, 256, 256};
  LayerKind kind = LayerKind::attention;
  bool use_diffusion = true;
  // Input switches for the feature-propagation / binary-indicator ablations.
  bool use_fp = true;
  bool use_bi = true;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
};

inline constexpr int kMessagePassingLayers = 8;
inline constexpr std::int64_t kReferenceParameterCount = 148881;

struct GacnModel {
  ModelSpec spec;
  std::vector<LayerParams> layers;
  Matrix diffusion_alpha_raw = Matrix::Zero(1, 1);  // alpha = sigmoid(raw)
  Matrix head_weight;                               // F_last x 2
  Matrix head_bias;                                 // 1 x 2
  // Velocities are divided by this before entering the network and the
  // output is multiplied by it. Not trained.
  double velocity_scale = 1.0;
  // Coordinate normalization used when the graphs were built. Not trained.
  double length_scale = 1.0;
  int knn = kDefaultNeighbors;

  double alpha() const;
};

struct ParamRef {
  std::string name;
  Matrix* value;
};
struct ConstParamRef {
  std::string name;
  const Matrix* value;
};

/// All trainable tensors in a fixed order (layers, alpha, head).
std::vector<ParamRef> parameters(GacnModel& model);
std::vector<ConstParamRef> parameters(const GacnModel& model);

std::int64_t param_count(const GacnModel& model);

/// Glorot-uniform weights, zero biases, alpha_raw = 0. Deterministic in seed.
GacnModel init_glorot(const ModelSpec& spec, std::uint64_t seed);

/// Message-passing neighborhoods with the self loop included (distance 0),
/// CSR by destination node.
struct AttentionNeighborhood {
  std::vector<std::int64_t> offsets;
  std::vector<int> source;
  std::vector<double> distance;

  static AttentionNeighborhood from_graph(const FlowGraph& graph);
  Eigen::Index num_nodes() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
};

/// Operators a forward pass needs for one graph. Holds references into the
/// graph's topology only through copies, so it may outlive the graph.
struct GraphContext {
  Eigen::Index num_nodes = 0;
  AttentionNeighborhood neighborhood;
  SparseMatrix laplacian;       // I - D^-1 A, unit weights
  SparseMatrix gcn_propagation; // row-normalized A + I
  SparseMatrix neighbor_mean;   // row-normalized A

  static GraphContext build(const FlowGraph& graph, LayerKind kind);
};

/// Attention weights per destination, in AttentionNeighborhood order.
struct AttentionCoefficients {
  std::vector<std::int64_t> offsets;
  std::vector<int> source;
  std::vector<double> alpha;
};

AttentionCoefficients attention_coefficients(const LayerParams& params, const FlowGraph& graph,
                                             const Matrix& h);

Matrix gat_layer_forward(const LayerParams& params, const FlowGraph& graph, const Matrix& h);
Matrix gcn_layer_forward(const LayerParams& params, const FlowGraph& graph, const Matrix& h);
Matrix sage_layer_forward(const LayerParams& params, const FlowGraph& graph, const Matrix& h);

/// H - alpha * L * H.
Matrix laplacian_diffusion(const Matrix& h, const SparseOperator& laplacian, double alpha);

/// Network input: (u_x, u_z, BI, x, z) with velocities from `propagated`
/// divided by the model's velocity scale. BI is forced to 1 when the model
/// was built without the indicator.
Matrix build_input_features(const GacnModel& model, const SparseSample& sample,
                            const Matrix& propagated);

/// Tape-level building blocks shared by the forward pass and its oracles.
namespace ops {
ad::Var attention_aggregate(ad::Tape& tape, ad::Var z, ad::Var att,
                            const AttentionNeighborhood& nbhd);
/// elu(a + 1_n * bias)
ad::Var bias_elu(ad::Tape& tape, ad::Var a, ad::Var bias);
/// h - alpha * L h with alpha a 1x1 value; L must outlive the backward pass.
ad::Var diffusion(ad::Tape& tape, ad::Var h, const SparseMatrix& laplacian, ad::Var alpha);
ad::Var layer(ad::Tape& tape, const GraphContext& ctx, LayerKind kind, ad::Var h,
              ad::Var weight, ad::Var weight_neigh, ad::Var att, ad::Var bias);
}  // namespace ops

/// A recorded forward pass. `params` is aligned with parameters(model).
struct ForwardTrace {
  ad::Tape tape;
  std::vector<ad::Var> params;
  ad::Var output;  // n x 2, in units of velocity_scale
};

ForwardTrace trace_forward(const GacnModel& model, const GraphContext& ctx,
                           const Matrix& input_features, bool requires_grad);

/// Full reconstruction in m/s from a sample and its propagated velocities.
Matrix gacn_forward(const GacnModel& model, const SparseSample& sample, const Matrix& propagated);

}  // namespace flowrec
