#include "flowrec/optim.hpp"

#include <cmath>
#include <limits>

namespace flowrec {

AdamState AdamState::for_parameters(const std::vector<ConstParamRef>& params) {
  AdamState st;
  for (const auto& p : params) {
    st.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    st.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  return st;
}

void adam_step(const std::vector<ParamRef>& params, const std::vector<Matrix>& grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    fail(ErrorCode::shape_mismatch, "adam_step: parameter, gradient and state counts differ");
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k].value;
    const Matrix& g = grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[k].rows() != p.rows() ||
        state.m[k].cols() != p.cols()) {
      fail(ErrorCode::shape_mismatch, "adam_step: shape mismatch for " + params[k].name);
    }
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (state.m[k].array() / c1) /
                 ((state.v[k].array() / c2).sqrt() + state.eps);
  }
}

PlateauScheduler::PlateauScheduler(int patience, double factor, double min_improvement,
                                   double min_lr)
    : patience_(patience),
      factor_(factor),
      min_improvement_(min_improvement),
      min_lr_(min_lr),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) {
    fail(ErrorCode::invalid_argument, "plateau factor must lie in (0, 1)");
  }
  if (patience < 1) fail(ErrorCode::invalid_argument, "plateau patience must be >= 1");
}

double PlateauScheduler::step(double val_loss, double lr) {
  if (val_loss <= best_ - min_improvement_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr;
  }
  if (++bad_epochs_ >= patience_) {
    bad_epochs_ = 0;
    return std::max(lr * factor_, min_lr_);
  }
  return lr;
}

double plateau_scheduler(const std::vector<double>& val_losses, int patience, double factor,
                         double lr) {
  // Replay with a unit rate to locate the reductions; only a reduction
  // triggered by the final epoch changes the caller's rate.
  PlateauScheduler sched(patience, factor, 1e-6, 0.0);
  bool reduced = false;
  for (double loss : val_losses) reduced = sched.step(loss, 1.0) < 1.0;
  return reduced ? std::max(lr * factor, 1e-7) : lr;
}

}  // namespace flowrec
