#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aupt/tensor.hpp"

namespace aupt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter moment accumulators for bias-corrected Adam.
template <typename Scalar>
struct AdamState {
  using Vector = typename Tensor<Scalar>::Vector;

  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<Vector> m;
  std::vector<Vector> v;
};

/// Zero accumulators shaped like `params`. Throws ConfigError on bad hyperparameters.
template <typename Scalar>
AdamState<Scalar> make_adam_state(std::span<const Tensor<Scalar>> params, const AdamConfig& config);

/// One in-place Adam update of every parameter from its grad slot (a missing
/// grad counts as zero). Increments state.step_count by one.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>> params, AdamState<Scalar>& state);

}  // namespace aupt
