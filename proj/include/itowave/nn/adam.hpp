#pragma once

#include <cstdint>
#include <span>

#include "itowave/nn/autograd.hpp"

namespace itowave::nn {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;

  void validate() const;
};

/// One bias-corrected Adam update over `params`; increments config.step_count
/// first, so the first update uses t = 1. Gradients are left untouched.
/// Throws NumericalError naming the first parameter with a non-finite gradient.
void adam_step(std::span<Parameter* const> params, AdamConfig& config);

}  // namespace itowave::nn
