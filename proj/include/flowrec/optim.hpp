#pragma once

#include "flowrec/model.hpp"

#include <vector>

namespace flowrec {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zero moments shaped like the given parameters.
  static AdamState for_parameters(const std::vector<ConstParamRef>& params);
};

/// One bias-corrected Adam update in place.
void adam_step(const std::vector<ParamRef>& params, const std::vector<Matrix>& grads,
               AdamState& state, double lr);

/// Reduce-on-plateau with an absolute improvement threshold.
class PlateauScheduler {
 public:
  PlateauScheduler(int patience, double factor, double min_improvement = 1e-6,
                   double min_lr = 1e-7);

  /// Feeds one epoch's validation loss, returns the learning rate to use next.
  double step(double val_loss, double lr);

  int bad_epochs() const { return bad_epochs_; }
  double best() const { return best_; }

 private:
  int patience_;
  double factor_;
  double min_improvement_;
  double min_lr_;
  double best_;
  int bad_epochs_ = 0;
};

/// Stateless form: replays the validation losses and returns the learning
/// rate after the last one.
double plateau_scheduler(const std::vector<double>& val_losses, int patience, double factor,
                         double lr);

}  // namespace flowrec
