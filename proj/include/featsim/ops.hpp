#pragma once

// Differentiable tensor operations. Feature maps are rank-3 (C, H, W).

#include <cstddef>

#include "featsim/autograd.hpp"

namespace featsim::ops {

/// Cross-correlation with zero padding kH/2 (3x3 keeps spatial size, 1x1 is
/// per-pixel), plus a per-output-channel bias.
/// x: (Cin, H, W), kernel: (Cout, Cin, k, k) with k odd, bias: (Cout).
Var conv2d(const Var& x, const Var& kernel, const Var& bias);

Var relu(const Var& x);

/// 2x2 max pooling with stride 2. Ties route the gradient to the first
/// maximum in row-major window order.
Var maxpool2x2(const Var& x);

/// out(c, i, j) = in(c, floor(i*H/th), floor(j*W/tw)).
Var nearest_interpolate(const Var& x, std::size_t target_h, std::size_t target_w);
Var upsample2x(const Var& x);

/// Stacks along the channel axis; spatial extents must match.
Var concat_channels(const Var& a, const Var& b);

/// Softmax across channels, independently per pixel.
Var softmax_channels(const Var& x);

/// Mean over H and W: (C, H, W) -> (C).
Var global_avg_pool(const Var& x);

/// out(c, y, x) = x(c, y, x) * s(c); s has shape (C).
Var scale_channels(const Var& x, const Var& s);

/// out(c, y, x) = x(c, y, x) * s(0, y, x); s has shape (1, H, W).
Var mul_spatial(const Var& x, const Var& s);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);

/// Reductions to a single-element tensor. Accumulated in double.
Var sum(const Var& x);
Var mean(const Var& x);
/// mean((a - b)^2)
Var mean_squared_difference(const Var& a, const Var& b);
/// sum(x * w) with a constant weight tensor of the same shape.
Var weighted_sum(const Var& x, const Tensor& weights);

}  // namespace featsim::ops
