#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tsam/ad/tensor.hpp"

namespace tsam::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, index-aligned with the parameter list passed
// to adam_step.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam update over `params` using their current
/// gradients. Buffers are allocated on the first call. Throws ContractError
/// when a parameter has no gradient or the buffers are misaligned.
void adam_step(std::span<Tensor<float>> params, AdamState& state);

}  // namespace tsam::ad
