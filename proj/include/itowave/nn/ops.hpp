#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "itowave/nn/autograd.hpp"

// Differentiable ops over Var. Layout conventions:
//   sequences  [batch, channels, length]
//   conv1d weights            [out_ch, in_ch, kernel]
//   conv_transpose1d weights  [in_ch, out_ch, kernel]
//   linear weights            [out, in]
// Shape violations throw ShapeError naming the offending shapes.
namespace itowave::nn {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var square(Var a);
Var abs(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.4);
Var silu(Var a);

/// x[B, C, L] + v[B, C] broadcast along length.
Var add_channel_vector(Var x, Var v);
/// Multiplies every element of batch row b by weights[b] (weights are constants).
Var scale_batch(Var x, std::span<const double> weights);

Var reshape(Var a, Shape shape);
/// Transpose of a rank-2 tensor.
Var transpose(Var a);
/// Channels [start, start + count) of x[B, C, L].
Var slice_channels(Var x, std::size_t start, std::size_t count);
/// Samples [start, start + count) along the last axis of x[B, C, L].
Var crop_length(Var x, std::size_t start, std::size_t count);

Var sum(Var a);
Var mean(Var a);

/// out_len = len + 2 padding - dilation (kernel - 1). `bias` may be empty.
Var conv1d(Var x, Var w, std::optional<Var> bias, std::size_t dilation, std::size_t padding);
/// out_len = (len - 1) stride - 2 padding + kernel.
Var conv_transpose1d(Var x, Var w, std::optional<Var> bias, std::size_t stride,
                     std::size_t padding);
/// x[B, in] -> [B, out].
Var linear(Var x, Var w, std::optional<Var> bias);

std::size_t conv1d_output_length(std::size_t len, std::size_t kernel, std::size_t dilation,
                                 std::size_t padding);
std::size_t conv_transpose1d_output_length(std::size_t len, std::size_t kernel,
                                           std::size_t stride, std::size_t padding);

}  // namespace itowave::nn
