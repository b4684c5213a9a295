#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "xview/autograd.hpp"
#include "xview/detail/gemm.hpp"
#include "xview/tensor.hpp"

namespace xview {

/// Source coordinates mapping an S x S aerial plane onto an H_t x W_t
/// panorama. Channel 0 holds x (column), channel 1 holds y (row), both in
/// aerial pixel units.
///
/// Convention: panorama column 0 looks north (up in the aerial image) and the
/// azimuth sweeps clockwise left-to-right; the bottom panorama row sits at the
/// aerial center and the top row on the inscribed circle of radius S/2.
struct PolarGrid {
  int aerial_size = 0;
  int pano_height = 0;
  int pano_width = 0;
  Tensor coords;  // 2 x pano_height x pano_width
};

PolarGrid build_polar_grid(int aerial_size, int pano_height, int pano_width);

namespace kernels {

/// Bilinear sampling position with per-corner zero padding.
template <class T>
struct SamplePoint {
  std::array<std::ptrdiff_t, 4> offset{-1, -1, -1, -1};  // 00, 01, 10, 11; -1 = outside
  T fx = T(0);
  T fy = T(0);
};

template <class T>
SamplePoint<T> locate(T y, T x, int height, int width) {
  SamplePoint<T> s;
  if (!(y > T(-1) && y < T(height) && x > T(-1) && x < T(width))) return s;
  const T yf = std::floor(y);
  const T xf = std::floor(x);
  const int y0 = static_cast<int>(yf);
  const int x0 = static_cast<int>(xf);
  s.fy = y - yf;
  s.fx = x - xf;
  const bool row0 = y0 >= 0;
  const bool row1 = y0 + 1 < height;
  const bool col0 = x0 >= 0;
  const bool col1 = x0 + 1 < width;
  const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(y0) * width + x0;
  if (row0 && col0) s.offset[0] = base;
  if (row0 && col1) s.offset[1] = base + 1;
  if (row1 && col0) s.offset[2] = base + width;
  if (row1 && col1) s.offset[3] = base + width + 1;
  return s;
}

template <class T>
inline T corner(const T* plane, std::ptrdiff_t off) {
  return off >= 0 ? plane[off] : T(0);
}

template <class T>
inline T interpolate(const T* plane, const SamplePoint<T>& s) {
  const T v00 = corner(plane, s.offset[0]);
  const T v01 = corner(plane, s.offset[1]);
  const T v10 = corner(plane, s.offset[2]);
  const T v11 = corner(plane, s.offset[3]);
  return (T(1) - s.fy) * ((T(1) - s.fx) * v00 + s.fx * v01) + s.fy * ((T(1) - s.fx) * v10 + s.fx * v11);
}

/// Accumulates d(value)/d(plane) * g into grad_plane and returns (d/dx, d/dy).
template <class T>
inline std::array<T, 2> interpolate_backward(const T* plane, const SamplePoint<T>& s, T g, T* grad_plane) {
  const T w00 = (T(1) - s.fy) * (T(1) - s.fx);
  const T w01 = (T(1) - s.fy) * s.fx;
  const T w10 = s.fy * (T(1) - s.fx);
  const T w11 = s.fy * s.fx;
  if (grad_plane) {
    if (s.offset[0] >= 0) grad_plane[s.offset[0]] += w00 * g;
    if (s.offset[1] >= 0) grad_plane[s.offset[1]] += w01 * g;
    if (s.offset[2] >= 0) grad_plane[s.offset[2]] += w10 * g;
    if (s.offset[3] >= 0) grad_plane[s.offset[3]] += w11 * g;
  }
  const T v00 = corner(plane, s.offset[0]);
  const T v01 = corner(plane, s.offset[1]);
  const T v10 = corner(plane, s.offset[2]);
  const T v11 = corner(plane, s.offset[3]);
  const T dx = (T(1) - s.fy) * (v01 - v00) + s.fy * (v11 - v10);
  const T dy = (T(1) - s.fx) * (v10 - v00) + s.fx * (v11 - v01);
  return {dx * g, dy * g};
}

/// out[c, i, j] = bilinear(feature[c], y = coords[1, i, j], x = coords[0, i, j]).
template <class T>
void bilinear_forward(const T* feature, int channels, int src_h, int src_w, const T* coords, int dst_h, int dst_w,
                      T* out) {
  const std::size_t dst_plane = static_cast<std::size_t>(dst_h) * dst_w;
  const std::size_t src_plane = static_cast<std::size_t>(src_h) * src_w;
  for (std::size_t p = 0; p < dst_plane; ++p) {
    const SamplePoint<T> s = locate(coords[dst_plane + p], coords[p], src_h, src_w);
    for (int c = 0; c < channels; ++c) {
      out[c * dst_plane + p] = interpolate(feature + c * src_plane, s);
    }
  }
}

/// Either gradient output may be null. Both are accumulated into.
template <class T>
void bilinear_backward(const T* feature, int channels, int src_h, int src_w, const T* coords, int dst_h, int dst_w,
                       const T* grad_out, T* grad_feature, T* grad_coords) {
  const std::size_t dst_plane = static_cast<std::size_t>(dst_h) * dst_w;
  const std::size_t src_plane = static_cast<std::size_t>(src_h) * src_w;
  for (std::size_t p = 0; p < dst_plane; ++p) {
    const SamplePoint<T> s = locate(coords[dst_plane + p], coords[p], src_h, src_w);
    T gx = T(0);
    T gy = T(0);
    for (int c = 0; c < channels; ++c) {
      const auto d = interpolate_backward(feature + c * src_plane, s, grad_out[c * dst_plane + p],
                                          grad_feature ? grad_feature + c * src_plane : nullptr);
      gx += d[0];
      gy += d[1];
    }
    if (grad_coords) {
      grad_coords[p] += gx;
      grad_coords[dst_plane + p] += gy;
    }
  }
}

/// Deformable im2col for stride 1, zero padding K/2. `offsets` is
/// (2*K*K) x H x W with channel 2k = dx and 2k+1 = dy for tap k = ki*K + kj.
/// `cols` is (C*K*K) x (H*W).
template <class T>
void deform_im2col(const T* input, int channels, int height, int width, const T* offsets, int kernel, T* cols) {
  const int pad = kernel / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const int taps = kernel * kernel;
  for (int k = 0; k < taps; ++k) {
    const int ki = k / kernel;
    const int kj = k % kernel;
    const T* off_x = offsets + static_cast<std::size_t>(2 * k) * plane;
    const T* off_y = offsets + static_cast<std::size_t>(2 * k + 1) * plane;
    for (int h = 0; h < height; ++h) {
      for (int w = 0; w < width; ++w) {
        const std::size_t p = static_cast<std::size_t>(h) * width + w;
        const T y = static_cast<T>(h - pad + ki) + off_y[p];
        const T x = static_cast<T>(w - pad + kj) + off_x[p];
        const SamplePoint<T> s = locate(y, x, height, width);
        for (int c = 0; c < channels; ++c) {
          cols[(static_cast<std::size_t>(c) * taps + k) * plane + p] = interpolate(input + c * plane, s);
        }
      }
    }
  }
}

/// Scatter column gradients back to the input and the offsets.
template <class T>
void deform_col2im(const T* input, int channels, int height, int width, const T* offsets, int kernel,
                   const T* grad_cols, T* grad_input, T* grad_offsets) {
  const int pad = kernel / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const int taps = kernel * kernel;
  for (int k = 0; k < taps; ++k) {
    const int ki = k / kernel;
    const int kj = k % kernel;
    const T* off_x = offsets + static_cast<std::size_t>(2 * k) * plane;
    const T* off_y = offsets + static_cast<std::size_t>(2 * k + 1) * plane;
    for (int h = 0; h < height; ++h) {
      for (int w = 0; w < width; ++w) {
        const std::size_t p = static_cast<std::size_t>(h) * width + w;
        const T y = static_cast<T>(h - pad + ki) + off_y[p];
        const T x = static_cast<T>(w - pad + kj) + off_x[p];
        const SamplePoint<T> s = locate(y, x, height, width);
        T gx = T(0);
        T gy = T(0);
        for (int c = 0; c < channels; ++c) {
          const T g = grad_cols[(static_cast<std::size_t>(c) * taps + k) * plane + p];
          const auto d =
              interpolate_backward(input + c * plane, s, g, grad_input ? grad_input + c * plane : nullptr);
          gx += d[0];
          gy += d[1];
        }
        if (grad_offsets) {
          grad_offsets[static_cast<std::size_t>(2 * k) * plane + p] += gx;
          grad_offsets[static_cast<std::size_t>(2 * k + 1) * plane + p] += gy;
        }
      }
    }
  }
}

/// Single-image deformable convolution: out (C_out x H x W).
/// weight is C_out x C_in x K x K; bias may be null.
template <class T>
void deform_conv_forward(const T* input, int in_channels, int height, int width, const T* offsets, const T* weight,
                         const T* bias, int out_channels, int kernel, T* out, std::vector<T>& scratch) {
  const int plane = height * width;
  const int rows = in_channels * kernel * kernel;
  scratch.assign(static_cast<std::size_t>(rows) * plane, T(0));
  deform_im2col(input, in_channels, height, width, offsets, kernel, scratch.data());
  detail::gemm<T>(false, false, out_channels, plane, rows, T(1), weight, scratch.data(), T(0), out);
  if (bias) {
    for (int o = 0; o < out_channels; ++o) {
      T* row = out + static_cast<std::size_t>(o) * plane;
      for (int p = 0; p < plane; ++p) row[p] += bias[o];
    }
  }
}

/// Accumulates into every non-null gradient pointer.
template <class T>
void deform_conv_backward(const T* input, int in_channels, int height, int width, const T* offsets, const T* weight,
                          int out_channels, int kernel, const T* grad_out, T* grad_input, T* grad_offsets,
                          T* grad_weight, T* grad_bias, std::vector<T>& scratch) {
  const int plane = height * width;
  const int rows = in_channels * kernel * kernel;
  if (grad_weight) {
    scratch.assign(static_cast<std::size_t>(rows) * plane, T(0));
    deform_im2col(input, in_channels, height, width, offsets, kernel, scratch.data());
    detail::gemm<T>(false, true, out_channels, rows, plane, T(1), grad_out, scratch.data(), T(1), grad_weight);
  }
  if (grad_bias) {
    for (int o = 0; o < out_channels; ++o) {
      const T* row = grad_out + static_cast<std::size_t>(o) * plane;
      T acc = T(0);
      for (int p = 0; p < plane; ++p) acc += row[p];
      grad_bias[o] += acc;
    }
  }
  if (grad_input || grad_offsets) {
    std::vector<T> grad_cols(static_cast<std::size_t>(rows) * plane);
    detail::gemm<T>(true, false, rows, plane, out_channels, T(1), weight, grad_out, T(0), grad_cols.data());
    deform_col2im(input, in_channels, height, width, offsets, kernel, grad_cols.data(), grad_input, grad_offsets);
  }
}

}  // namespace kernels

/// Bilinear resampling of every batch item through the same polar grid.
/// feature: N x C x H_s x W_s -> N x C x H_t x W_t.
Var bilinear_sample(const Var& feature, const PolarGrid& grid);

/// Bilinear resampling through a per-item coordinate field N x 2 x H_t x W_t.
/// Differentiable with respect to both arguments. NaN coordinates are rejected.
Var bilinear_sample(const Var& feature, const Var& coords);

/// Deformable 2-D convolution, stride 1, zero padding K/2.
/// input N x C_in x H x W, offsets N x 2KK x H x W, weight C_out x C_in x K x K,
/// bias C_out (may be undefined).
Var deformable_conv(const Var& input, const Var& offsets, const Var& weight, const Var& bias);

}  // namespace xview
