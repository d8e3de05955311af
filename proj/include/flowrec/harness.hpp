#pragma once

#include "flowrec/datagen.hpp"
#include "flowrec/metrics.hpp"
#include "flowrec/sparsify.hpp"
#include "flowrec/train.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowrec {

/// Synthetic benchmark definition: data generation plus the training budget
/// shared by every method.
struct BenchmarkConfig {
  TrainConfig train;
  DomainSpec domain;
  SpectrumSpec spectrum;
  DatasetSizes sizes;
  std::vector<double> cads{-120.0, -113.0, -107.0, -100.0, -93.0, -87.0, -80.0, -73.0, -67.0, -60.0};
  int per_cad_count = 25;
  std::uint64_t data_seed = 7;
  // Coordinate normalization shared by all snapshots; 0 means the panel diagonal.
  double length_scale = 0.0;

  double effective_length_scale() const;
  void validate() const;
};

/// TrainConfig keys plus `data.*` keys (see README). Throws with line numbers.
void apply_benchmark_text(BenchmarkConfig& config, std::istream& in,
                          const std::string& source = "<config>");
BenchmarkConfig load_benchmark_config(const std::filesystem::path& path);

/// make_dataset with the config's domain, spectrum, sizes and data seed.
Dataset generate_dataset(const BenchmarkConfig& config);

/// Reads a manifest written by write_manifest; paths are relative to the
/// manifest's directory.
Dataset load_manifest(const std::filesystem::path& manifest);

struct BenchmarkData {
  std::vector<SparseSample> train;
  std::vector<SparseSample> val;
  std::vector<SparseSample> test;
  std::vector<SizeClass> test_size;
  std::vector<std::string> test_tag;
};

/// Builds graphs with the shared length scale and applies seeded random
/// masks at config.train.keep_fraction.
BenchmarkData prepare_benchmark(const Dataset& dataset, const BenchmarkConfig& config);

struct AblationVariant {
  std::string name;
  LayerKind kind = LayerKind::attention;
  bool use_fp = true;
  bool use_bi = true;
};

/// none, fp, fp+bi (attention) followed by gcn and mean_aggregator at fp+bi.
std::vector<AblationVariant> ablation_grid();

struct AblationRow {
  AblationVariant variant;
  bool failed = false;
  std::string error;
  double mae = 0.0;  // means over test snapshots
  double rmse = 0.0;
  double r2 = 0.0;
  std::size_t parameters = 0;
  int best_epoch = 0;
  double final_train_loss = 0.0;
  std::vector<MetricsReport> reports;
  std::optional<GacnModel> model;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  const AblationRow& row(std::string_view name) const;
};

using Progress = std::function<void(const std::string&)>;

/// Trains every variant with the same seeds and budget and scores it on the
/// test samples. A diverging run marks its row failed.
AblationTable run_ablation(const BenchmarkData& data, const TrainConfig& config,
                           const Progress& progress = {});

/// `variant,layer,fp,bi,status,mae,rmse,r2,n_snapshots,parameters,best_epoch,final_train_loss`
void write_ablation_csv(std::ostream& out, const AblationTable& table);

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t count = 0;
};

/// Linear-interpolated quartiles; empty input gives NaNs.
Summary summarize(std::vector<double> values);

struct MethodAggregate {
  std::string method;
  std::string size_class;  // panel, slice or all
  Summary mae;
  Summary rmse;
  Summary r2;
};

struct EvaluationReport {
  std::vector<MetricsReport> reports;  // per method and snapshot, snapshot-major
  std::vector<MethodAggregate> aggregates;
  std::vector<std::string> fallback_snapshots;  // cubic fell back to nearest neighbor

  const MethodAggregate& aggregate(std::string_view method, std::string_view size_class) const;
  /// Mean MAE of cubic minus mean MAE of gacn for a size class.
  double mae_gap(std::string_view size_class) const;
};

EvaluationReport evaluate_methods(const BenchmarkData& data, const GacnModel& model,
                                  const PropagationOptions& fp = {});

/// `method,size_class,count,mae_mean,mae_median,mae_q1,mae_q3,rmse_mean,...,r2_q3`
void write_evaluation_csv(std::ostream& out, const EvaluationReport& report);

}  // namespace flowrec
