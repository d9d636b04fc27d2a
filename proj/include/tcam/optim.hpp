#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tcam/tensor.hpp"

namespace tcam {

/// Plain SGD with a step schedule: the rate is multiplied by every
/// multiplier whose epoch threshold has been reached.
struct SgdConfig {
  double learning_rate = 1e-4;
  std::vector<std::pair<int, double>> schedule;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    int previous = -1;
    for (const auto& [epoch, multiplier] : schedule) {
      if (!(multiplier > 0.0 && multiplier <= 1.0)) {
        throw std::invalid_argument("schedule multipliers must lie in (0, 1]");
      }
      if (epoch <= previous) throw std::invalid_argument("schedule thresholds must ascend");
      previous = epoch;
    }
  }

  double rate_at(int epoch) const {
    double lr = learning_rate;
    for (const auto& [threshold, multiplier] : schedule) {
      if (threshold <= epoch) lr *= multiplier;
    }
    return lr;
  }
};

/// p <- p - lr(epoch) * grad, then zero the gradients.
inline void sgd_step(std::span<Tensor> params, const SgdConfig& config, int epoch) {
  for (const auto& p : params) {
    if (!p.has_grad()) throw std::logic_error("sgd_step: parameter has no gradient");
  }
  const double lr = config.rate_at(epoch);
  for (auto& p : params) {
    auto data = p.data_mut();
    const auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
    p.zero_grad();
  }
}

}  // namespace tcam
