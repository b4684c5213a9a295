#pragma once

#include <cstdint>
#include <vector>

#include "xview/autograd.hpp"

namespace xview::ops {

/// Zero-padded 2-D convolution. x: N x C_in x H x W, weight: C_out x C_in x K x K.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);

/// Transposed convolution (adjoint of conv2d). weight: C_in x C_out x K x K.
/// Output size (H - 1) * stride - 2 * padding + K + output_padding.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding, int output_padding);

/// Per-sample, per-channel normalization without affine parameters.
Var instance_norm(const Var& x, float eps = 1e-5f);

Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

Var add(const Var& a, const Var& b);
Var add_n(const std::vector<Var>& terms);
Var scale(const Var& x, float factor);

/// x: N x C x H x W scaled by gate: N x C broadcast over space.
Var mul_channel(const Var& x, const Var& gate);

/// N x C x H x W -> N x C.
Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);

/// x: N x in, weight: out x in, bias: out.
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Softmax across the channel axis of an N x C x H x W tensor.
Var softmax_channels(const Var& x);

/// 2x2 stride-2 max pooling that also reports the argmax flat index per output.
struct PoolResult {
  Var output;
  std::vector<std::int32_t> indices;
};
PoolResult max_pool2x2(const Var& x);

/// Scatter x into a zero tensor of spatial size (height, width) at `indices`.
Var max_unpool2x2(const Var& x, const std::vector<std::int32_t>& indices, int height, int width);

/// Same data, new shape; gradient reshaped back.
Var reshape(const Var& x, Shape shape);

/// Scalar helpers.
Var mean(const Var& x);
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<float>& weights);

}  // namespace xview::ops
