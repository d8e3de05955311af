#pragma once

#include "flowrec/featprop.hpp"
#include "flowrec/model.hpp"
#include "flowrec/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace flowrec {

struct TrainConfig {
  double lr0 = 1e-4;
  int epochs = 100;
  int plateau_patience = 10;
  double plateau_factor = 0.5;
  double min_improvement = 1e-6;
  double min_lr = 1e-7;
  double keep_fraction = 0.01;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  std::vector<int> widths{5, 8, 16, 32, 64, 128, 256, 256, 256};
  int knn = kDefaultNeighbors;
  int fp_max_iters = 40;
  double fp_tol = 1e-6;
  bool use_diffusion = true;
  double divergence_threshold = 1e6;

  void validate() const;
};

/// Applies `key = value` lines (# starts a comment). Unknown keys and
/// malformed values throw with the line number.
void apply_config_text(TrainConfig& config, std::istream& in, const std::string& source = "<config>");
TrainConfig load_train_config(const std::filesystem::path& path);
/// Applies a single key/value pair; returns false if the key is not a
/// TrainConfig field.
bool set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

/// `epoch,train_loss,val_loss,lr,seconds`
void write_history_csv(std::ostream& out, const TrainHistory& history);

/// Training aborted on a non-finite or exploding loss.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, TrainHistory history)
      : Error(ErrorCode::diverged, message), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

struct Gradients {
  double loss = 0.0;
  std::vector<Matrix> grads;  // aligned with parameters(model)
};

/// Reverse-mode gradients of the masked MSE (in velocity_scale units) with
/// respect to every parameter. Propagated velocities are a constant input.
Gradients backward(const GacnModel& model, const SparseSample& sample, const Matrix& propagated);

/// Velocities the network sees before scaling: the FP result when the model
/// uses feature propagation, the raw known values otherwise.
Matrix network_velocities(const GacnModel& model, const SparseSample& sample,
                          const PropagationOptions& fp = {});

/// Runs FP (if enabled) and the network.
Matrix reconstruct(const GacnModel& model, const SparseSample& sample,
                   const PropagationOptions& fp = {});

/// RMS of all target velocity components across the samples.
double rms_velocity(const std::vector<SparseSample>& samples);

struct TrainResult {
  GacnModel model;  // parameters of the best validation epoch
  TrainHistory history;
};

struct TrainOptions {
  LayerKind layer_kind = LayerKind::attention;
  bool use_fp = true;
  bool use_bi = true;
  // Per-epoch progress callback; may be empty.
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const std::vector<SparseSample>& train_set,
                  const std::vector<SparseSample>& val_set, const TrainConfig& config,
                  const TrainOptions& options);

/// Splits `dataset` by config.validation_fraction (seeded) and trains. When
/// the split leaves no validation samples the training loss stands in.
TrainResult train(const std::vector<SparseSample>& dataset, const TrainConfig& config,
                  LayerKind layer_kind, bool use_fp, bool use_bi);

}  // namespace flowrec
