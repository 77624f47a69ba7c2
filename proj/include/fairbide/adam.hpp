#pragma once

#include <cstdint>
#include <vector>

#include "fairbide/matrix.hpp"

namespace fairbide {

// Standard Adam with bias correction. Only the learning rate is typically
// configured; beta/epsilon stay at their usual defaults.
struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Updates each parameter in place. Parameter order and shapes must stay
  // fixed across calls; moment buffers are allocated on first use.
  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace fairbide
