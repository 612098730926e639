#pragma once

#include <span>

#include "itowave/nn/tensor.hpp"

namespace itowave {

/// Anything that can estimate grad_x log p_t(x) for a batch of states.
/// `x` is [batch, d]; `t` holds one diffusion time per batch row; the result
/// has the shape of `x`.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual nn::Tensor score(const nn::Tensor& x, std::span<const double> t) const = 0;
};

}  // namespace itowave
