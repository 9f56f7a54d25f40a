#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "relcast/error.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

/// Bias-corrected Adam. Only the learning rate and its decay factor are
/// training-protocol choices; the moment coefficients stay at the usual
/// defaults.
template <class T>
struct AdamState {
  double learning_rate = 5e-5;
  double decay_factor = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

/// One Adam update of `params` from their accumulated gradients.
template <class T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params) {
  if (!(state.learning_rate > 0.0)) {
    throw ContractError("adam_step: learning rate must be positive");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " +
                         std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw DimensionError("adam_step: moment/gradient shape mismatch for '" +
                           p.name + "' " + shape_str(p.value.shape()));
    }
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double g = static_cast<double>(p.grad[k]);
      double mk = b1 * static_cast<double>(m[k]) + (1.0 - b1) * g;
      double vk = b2 * static_cast<double>(v[k]) + (1.0 - b2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      double update = state.learning_rate * (mk / c1) /
                      (std::sqrt(vk / c2) + state.epsilon);
      p.value[k] = static_cast<T>(static_cast<double>(p.value[k]) - update);
    }
  }
}

template <class T>
void lr_decay(AdamState<T>& state) {
  if (!(state.decay_factor > 0.0 && state.decay_factor <= 1.0)) {
    throw ContractError("lr_decay: decay factor must lie in (0, 1]");
  }
  state.learning_rate *= state.decay_factor;
}

/// Signals a decay when the monitored metric (higher is better) has not
/// improved for `patience` consecutive epochs. An optional loss breaks
/// ties: an equal metric with a strictly lower loss counts as progress, so a
/// saturated metric alone does not trigger decays.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(std::size_t patience) : patience_(patience) {}

  /// Returns true when a decay should be applied after this epoch.
  bool observe(double metric, double loss = std::numeric_limits<double>::infinity()) {
    if (metric > best_ || (metric == best_ && loss < best_loss_)) {
      best_ = metric;
      best_loss_ = loss;
      stale_ = 0;
      return false;
    }
    if (++stale_ >= patience_) {
      stale_ = 0;
      return true;
    }
    return false;
  }

  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
  double best_loss_ = std::numeric_limits<double>::infinity();
};

}  // namespace relcast
