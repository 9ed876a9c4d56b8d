#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pve/tensor.hpp"

namespace pve {

struct AdamHyper {
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

struct AdamState {
  AdamHyper hyper;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
  std::uint64_t skipped = 0;  // updates rejected for non-finite gradients
};

/// Applies one bias-corrected Adam update using each parameter's gradient
/// buffer. Moments are allocated lazily on the first call. If any gradient
/// entry is non-finite nothing changes except `state.skipped`, and the
/// function returns false.
bool adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace pve
