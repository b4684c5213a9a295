#include "xview/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xview/detail/gemm.hpp"
#include "xview/error.hpp"

namespace xview::ops {

namespace {

// Columns for output rows [row0, row1): row (c, ki, kj), column (oh - row0) * out_w + ow.
void im2col(const float* img, int channels, int height, int width, int kernel, int stride, int pad, int row0,
            int row1, int out_w, float* cols) {
  const std::size_t band = static_cast<std::size_t>(row1 - row0) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* src = img + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        float* dst = cols + ((static_cast<std::size_t>(c) * kernel + ki) * kernel + kj) * band;
        for (int oh = row0; oh < row1; ++oh) {
          const int ih = oh * stride - pad + ki;
          float* row = dst + static_cast<std::size_t>(oh - row0) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(row, row + out_w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(ih) * width;
          if (stride == 1) {
            const int lo = std::clamp(pad - kj, 0, out_w);
            const int hi = std::clamp(width + pad - kj, lo, out_w);
            std::fill(row, row + lo, 0.0f);
            std::copy(srow + lo - pad + kj, srow + hi - pad + kj, row + lo);
            std::fill(row + hi, row + out_w, 0.0f);
          } else {
            for (int ow = 0; ow < out_w; ++ow) {
              const int iw = ow * stride - pad + kj;
              row[ow] = (iw >= 0 && iw < width) ? srow[iw] : 0.0f;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates the band's columns into img.
void col2im(const float* cols, int channels, int height, int width, int kernel, int stride, int pad, int row0,
            int row1, int out_w, float* img) {
  const std::size_t band = static_cast<std::size_t>(row1 - row0) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* dst = img + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const float* src = cols + ((static_cast<std::size_t>(c) * kernel + ki) * kernel + kj) * band;
        for (int oh = row0; oh < row1; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= height) continue;
          float* drow = dst + static_cast<std::size_t>(ih) * width;
          const float* srow = src + static_cast<std::size_t>(oh - row0) * out_w;
          if (stride == 1) {
            const int lo = std::clamp(pad - kj, 0, out_w);
            const int hi = std::clamp(width + pad - kj, lo, out_w);
            for (int ow = lo; ow < hi; ++ow) drow[ow - pad + kj] += srow[ow];
          } else {
            for (int ow = 0; ow < out_w; ++ow) {
              const int iw = ow * stride - pad + kj;
              if (iw >= 0 && iw < width) drow[iw] += srow[ow];
            }
          }
        }
      }
    }
  }
}

// Output rows per im2col band so the column buffer stays cache-sized.
int band_rows(int rows, int out_h, int out_w) {
  constexpr std::size_t kBandFloats = 1 << 16;
  const std::size_t per_row = static_cast<std::size_t>(rows) * out_w;
  return static_cast<int>(std::clamp<std::size_t>(kBandFloats / std::max<std::size_t>(per_row, 1), 1, out_h));
}

void add_bias(float* out, const float* bias, int channels, std::size_t plane) {
  for (int c = 0; c < channels; ++c) {
    float* row = out + c * plane;
    const float b = bias[c];
    for (std::size_t p = 0; p < plane; ++p) row[p] += b;
  }
}

void accumulate_bias_grad(const float* grad, int channels, std::size_t plane, float* gbias) {
  for (int c = 0; c < channels; ++c) {
    const float* row = grad + c * plane;
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += row[p];
    gbias[c] += static_cast<float>(acc);
  }
}

float* grad_ptr(Node& n) { return n.requires_grad ? n.grad_buffer().data() : nullptr; }

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected N x C x H x W, got " + shape_str(t.shape()));
}

template <class Fwd, class Bwd>
Var elementwise(const Var& x, Fwd fwd, Bwd dfdx_from_y) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(xv[i]);
  return make_result(std::move(out), {x}, [dfdx_from_y](Node& node) {
    Node& in = *node.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i] * dfdx_from_y(in.value[i], node.value[i]);
  });
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv2d");
  if (wv.rank() != 4 || wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " + shape_str(xv.shape()));
  }
  const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int cout = wv.dim(0), k = wv.dim(2);
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (w + 2 * padding - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: input too small for kernel");
  if (bias.defined()) require_shape(bias.value(), {cout}, "conv2d bias");
  const int rows = cin * k * k;
  const int plane = oh * ow;
  const bool direct = (k == 1 && stride == 1 && padding == 0);
  const int step = direct ? oh : band_rows(rows, oh, ow);
  Tensor out({n, cout, oh, ow});
  std::vector<float> cols(direct ? 0 : static_cast<std::size_t>(rows) * step * ow);
  for (int b = 0; b < n; ++b) {
    const float* src = xv.data() + static_cast<std::size_t>(b) * cin * h * w;
    float* dst = out.data() + static_cast<std::size_t>(b) * cout * plane;
    for (int r0 = 0; r0 < oh; r0 += step) {
      const int r1 = std::min(oh, r0 + step);
      const int cols_n = (r1 - r0) * ow;
      if (direct) {
        detail::gemm<float>(false, false, cout, plane, rows, 1.0f, wv.data(), rows, src, plane, 0.0f, dst, plane);
      } else {
        im2col(src, cin, h, w, k, stride, padding, r0, r1, ow, cols.data());
        detail::gemm<float>(false, false, cout, cols_n, rows, 1.0f, wv.data(), rows, cols.data(), cols_n, 0.0f,
                            dst + r0 * ow, plane);
      }
    }
    if (bias.defined()) add_bias(dst, bias.value().data(), cout, plane);
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [=](Node& node) {
    Node& xin = *node.inputs[0];
    Node& win = *node.inputs[1];
    float* gx = grad_ptr(xin);
    float* gw = grad_ptr(win);
    float* gb = node.inputs.size() > 2 ? grad_ptr(*node.inputs[2]) : nullptr;
    const float* wt = win.value.data();
    std::vector<float> buf(direct || !gw ? 0 : static_cast<std::size_t>(rows) * step * ow);
    std::vector<float> gcols(direct || !gx ? 0 : static_cast<std::size_t>(rows) * step * ow);
    for (int b = 0; b < n; ++b) {
      const float* src = xin.value.data() + static_cast<std::size_t>(b) * cin * h * w;
      const float* g = node.grad.data() + static_cast<std::size_t>(b) * cout * plane;
      if (gb) accumulate_bias_grad(g, cout, plane, gb);
      if (direct) {
        if (gw) detail::gemm<float>(false, true, cout, rows, plane, 1.0f, g, plane, src, plane, 1.0f, gw, rows);
        if (gx) {
          detail::gemm<float>(true, false, rows, plane, cout, 1.0f, wt, rows, g, plane, 1.0f,
                              gx + static_cast<std::size_t>(b) * cin * h * w, plane);
        }
        continue;
      }
      for (int r0 = 0; r0 < oh; r0 += step) {
        const int r1 = std::min(oh, r0 + step);
        const int cols_n = (r1 - r0) * ow;
        const float* gband = g + r0 * ow;
        if (gw) {
          im2col(src, cin, h, w, k, stride, padding, r0, r1, ow, buf.data());
          detail::gemm<float>(false, true, cout, rows, cols_n, 1.0f, gband, plane, buf.data(), cols_n, 1.0f, gw, rows);
        }
        if (gx) {
          detail::gemm<float>(true, false, rows, cols_n, cout, 1.0f, wt, rows, gband, plane, 0.0f, gcols.data(),
                              cols_n);
          col2im(gcols.data(), cin, h, w, k, stride, padding, r0, r1, ow, gx + static_cast<std::size_t>(b) * cin * h * w);
        }
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding, int output_padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv_transpose2d");
  if (wv.rank() != 4 || wv.dim(0) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("conv_transpose2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                     shape_str(xv.shape()));
  }
  if (output_padding >= stride) throw InvalidArgument("conv_transpose2d: output_padding must be < stride");
  const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int cout = wv.dim(1), k = wv.dim(2);
  const int oh = (h - 1) * stride - 2 * padding + k + output_padding;
  const int ow = (w - 1) * stride - 2 * padding + k + output_padding;
  if (bias.defined()) require_shape(bias.value(), {cout}, "conv_transpose2d bias");
  // The transposed convolution is the adjoint of a conv2d from the output grid onto the input grid.
  const int rows = cout * k * k;
  const int in_plane = h * w;
  const int out_plane = oh * ow;
  const int step = band_rows(rows, h, w);
  Tensor out({n, cout, oh, ow});
  std::vector<float> cols(static_cast<std::size_t>(rows) * step * w);
  for (int b = 0; b < n; ++b) {
    const float* src = xv.data() + static_cast<std::size_t>(b) * cin * in_plane;
    float* dst = out.data() + static_cast<std::size_t>(b) * cout * out_plane;
    for (int r0 = 0; r0 < h; r0 += step) {
      const int r1 = std::min(h, r0 + step);
      const int cols_n = (r1 - r0) * w;
      detail::gemm<float>(true, false, rows, cols_n, cin, 1.0f, wv.data(), rows, src + r0 * w, in_plane, 0.0f,
                          cols.data(), cols_n);
      col2im(cols.data(), cout, oh, ow, k, stride, padding, r0, r1, w, dst);
    }
    if (bias.defined()) add_bias(dst, bias.value().data(), cout, out_plane);
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [=](Node& node) {
    Node& xin = *node.inputs[0];
    Node& win = *node.inputs[1];
    float* gx = grad_ptr(xin);
    float* gw = grad_ptr(win);
    float* gb = node.inputs.size() > 2 ? grad_ptr(*node.inputs[2]) : nullptr;
    std::vector<float> gcols(static_cast<std::size_t>(rows) * step * w);
    for (int b = 0; b < n; ++b) {
      const float* g = node.grad.data() + static_cast<std::size_t>(b) * cout * out_plane;
      if (gb) accumulate_bias_grad(g, cout, out_plane, gb);
      if (!gx && !gw) continue;
      for (int r0 = 0; r0 < h; r0 += step) {
        const int r1 = std::min(h, r0 + step);
        const int cols_n = (r1 - r0) * w;
        im2col(g, cout, oh, ow, k, stride, padding, r0, r1, w, gcols.data());
        if (gx) {
          detail::gemm<float>(false, false, cin, cols_n, rows, 1.0f, win.value.data(), rows, gcols.data(), cols_n,
                              1.0f, gx + static_cast<std::size_t>(b) * cin * in_plane + r0 * w, in_plane);
        }
        if (gw) {
          detail::gemm<float>(false, true, cin, rows, cols_n, 1.0f,
                              xin.value.data() + static_cast<std::size_t>(b) * cin * in_plane + r0 * w, in_plane,
                              gcols.data(), cols_n, 1.0f, gw, rows);
        }
      }
    }
  });
}

Var instance_norm(const Var& x, float eps) {
  const Tensor& xv = x.value();
  require_rank4(xv, "instance_norm");
  const int groups = xv.dim(0) * xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out(xv.shape());
  std::vector<float> inv_std(groups);
  for (int g = 0; g < groups; ++g) {
    const float* src = xv.data() + g * plane;
    double mu = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mu += src[p];
    mu /= plane;
    double var = 0.0;
    for (std::size_t p = 0; p < plane; ++p) var += (src[p] - mu) * (src[p] - mu);
    var /= plane;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[g] = static_cast<float>(is);
    float* dst = out.data() + g * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<float>((src[p] - mu) * is);
  }
  return make_result(std::move(out), {x}, [=](Node& node) {
    Tensor& gx = node.inputs[0]->grad_buffer();
    for (int g = 0; g < groups; ++g) {
      const float* y = node.value.data() + g * plane;
      const float* dy = node.grad.data() + g * plane;
      double mean_dy = 0.0, mean_dyy = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        mean_dy += dy[p];
        mean_dyy += static_cast<double>(dy[p]) * y[p];
      }
      mean_dy /= plane;
      mean_dyy /= plane;
      float* dst = gx.data() + g * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        dst[p] += static_cast<float>(inv_std[g] * (dy[p] - mean_dy - y[p] * mean_dyy));
      }
    }
  });
}

Var relu(const Var& x) {
  return elementwise(
      x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float xv, float) { return xv > 0.0f ? 1.0f : 0.0f; });
}

Var leaky_relu(const Var& x, float slope) {
  return elementwise(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float xv, float) { return xv > 0.0f ? 1.0f : slope; });
}

Var tanh(const Var& x) {
  return elementwise(
      x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Var sigmoid(const Var& x) {
  return elementwise(
      x, [](float v) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))); },
      [](float, float y) { return y * (1.0f - y); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& node) {
    for (auto& in : node.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
    }
  });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw InvalidArgument("add_n of zero terms");
  Tensor out(terms.front().shape());
  for (const Var& t : terms) {
    require_same_shape(t.value(), terms.front().value(), "add_n");
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += t.value()[i];
  }
  return make_result(std::move(out), terms, [](Node& node) {
    for (auto& in : node.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
    }
  });
}

Var scale(const Var& x, float factor) {
  return elementwise(
      x, [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

Var mul_channel(const Var& x, const Var& gate) {
  const Tensor& xv = x.value();
  require_rank4(xv, "mul_channel");
  require_shape(gate.value(), {xv.dim(0), xv.dim(1)}, "mul_channel gate");
  const int groups = xv.dim(0) * xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out(xv.shape());
  for (int g = 0; g < groups; ++g) {
    const float s = gate.value()[g];
    for (std::size_t p = 0; p < plane; ++p) out[g * plane + p] = xv[g * plane + p] * s;
  }
  return make_result(std::move(out), {x, gate}, [=](Node& node) {
    Node& xin = *node.inputs[0];
    Node& gin = *node.inputs[1];
    float* gx = grad_ptr(xin);
    float* gg = grad_ptr(gin);
    for (int g = 0; g < groups; ++g) {
      const float s = gin.value[g];
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        const float d = node.grad[g * plane + p];
        if (gx) gx[g * plane + p] += d * s;
        acc += static_cast<double>(d) * xin.value[g * plane + p];
      }
      if (gg) gg[g] += static_cast<float>(acc);
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "global_avg_pool");
  const int groups = xv.dim(0) * xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1)});
  for (int g = 0; g < groups; ++g) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += xv[g * plane + p];
    out[g] = static_cast<float>(acc / plane);
  }
  return make_result(std::move(out), {x}, [=](Node& node) {
    Tensor& gx = node.inputs[0]->grad_buffer();
    for (int g = 0; g < groups; ++g) {
      const float d = node.grad[g] / static_cast<float>(plane);
      for (std::size_t p = 0; p < plane; ++p) gx[g * plane + p] += d;
    }
  });
}

Var global_max_pool(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "global_max_pool");
  const int groups = xv.dim(0) * xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1)});
  std::vector<std::size_t> arg(groups);
  for (int g = 0; g < groups; ++g) {
    std::size_t best = 0;
    for (std::size_t p = 1; p < plane; ++p) {
      if (xv[g * plane + p] > xv[g * plane + best]) best = p;
    }
    arg[g] = best;
    out[g] = xv[g * plane + best];
  }
  return make_result(std::move(out), {x}, [=](Node& node) {
    Tensor& gx = node.inputs[0]->grad_buffer();
    for (int g = 0; g < groups; ++g) gx[g * plane + arg[g]] += node.grad[g];
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2 || wv.dim(1) != xv.dim(1)) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + " incompatible with weight " + shape_str(wv.shape()));
  }
  const int n = xv.dim(0), in = xv.dim(1), outf = wv.dim(0);
  if (bias.defined()) require_shape(bias.value(), {outf}, "linear bias");
  Tensor out({n, outf});
  detail::gemm<float>(false, true, n, outf, in, 1.0f, xv.data(), wv.data(), 0.0f, out.data());
  if (bias.defined()) {
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < outf; ++o) out[b * outf + o] += bias.value()[o];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [=](Node& node) {
    Node& xin = *node.inputs[0];
    Node& win = *node.inputs[1];
    if (float* gx = grad_ptr(xin)) {
      detail::gemm<float>(false, false, n, in, outf, 1.0f, node.grad.data(), win.value.data(), 1.0f, gx);
    }
    if (float* gw = grad_ptr(win)) {
      detail::gemm<float>(true, false, outf, in, n, 1.0f, node.grad.data(), xin.value.data(), 1.0f, gw);
    }
    if (node.inputs.size() > 2) {
      if (float* gb = grad_ptr(*node.inputs[2])) {
        for (int b = 0; b < n; ++b)
          for (int o = 0; o < outf; ++o) gb[o] += node.grad[b * outf + o];
      }
    }
  });
}

Var softmax_channels(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "softmax_channels");
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out(xv.shape());
  for (int b = 0; b < n; ++b) {
    const float* src = xv.data() + b * c * plane;
    float* dst = out.data() + b * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      float mx = -std::numeric_limits<float>::infinity();
      for (int k = 0; k < c; ++k) mx = std::max(mx, src[k * plane + p]);
      double z = 0.0;
      for (int k = 0; k < c; ++k) z += std::exp(static_cast<double>(src[k * plane + p] - mx));
      for (int k = 0; k < c; ++k) {
        dst[k * plane + p] = static_cast<float>(std::exp(static_cast<double>(src[k * plane + p] - mx)) / z);
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& node) {
    Tensor& gx = node.inputs[0]->grad_buffer();
    for (int b = 0; b < n; ++b) {
      const float* y = node.value.data() + b * c * plane;
      const float* dy = node.grad.data() + b * c * plane;
      float* dst = gx.data() + b * c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += static_cast<double>(y[k * plane + p]) * dy[k * plane + p];
        for (int k = 0; k < c; ++k) {
          dst[k * plane + p] += static_cast<float>(y[k * plane + p] * (dy[k * plane + p] - dot));
        }
      }
    }
  });
}

PoolResult max_pool2x2(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "max_pool2x2");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2x2: input smaller than 2x2");
  Tensor out({n, c, oh, ow});
  std::vector<std::int32_t> idx(out.numel());
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  for (int g = 0; g < n * c; ++g) {
    const float* src = xv.data() + g * in_plane;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::int32_t best = (2 * i) * w + 2 * j;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const std::int32_t cand = (2 * i + di) * w + 2 * j + dj;
            if (src[cand] > src[best]) best = cand;
          }
        const std::size_t o = g * out_plane + static_cast<std::size_t>(i) * ow + j;
        idx[o] = best;
        out[o] = src[best];
      }
    }
  }
  Var result = make_result(std::move(out), {x}, [idx, in_plane, out_plane](Node& node) {
    Tensor& gx = node.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < node.grad.numel(); ++o) {
      gx[(o / out_plane) * in_plane + static_cast<std::size_t>(idx[o])] += node.grad[o];
    }
  });
  return {std::move(result), std::move(idx)};
}

Var max_unpool2x2(const Var& x, const std::vector<std::int32_t>& indices, int height, int width) {
  const Tensor& xv = x.value();
  require_rank4(xv, "max_unpool2x2");
  if (indices.size() != xv.numel()) throw ShapeError("max_unpool2x2: index count mismatch");
  const std::size_t in_plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  const std::size_t out_plane = static_cast<std::size_t>(height) * width;
  Tensor out({xv.dim(0), xv.dim(1), height, width});
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    out[(i / in_plane) * out_plane + static_cast<std::size_t>(indices[i])] = xv[i];
  }
  return make_result(std::move(out), {x}, [indices, in_plane, out_plane](Node& node) {
    Tensor& gx = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      gx[i] += node.grad[(i / in_plane) * out_plane + static_cast<std::size_t>(indices[i])];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& node) {
    Tensor& g = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
  });
}

Var mean(const Var& x) {
  const std::size_t count = x.value().numel();
  Tensor out({1}, static_cast<float>(static_cast<double>(x.value().sum()) / count));
  return make_result(std::move(out), {x}, [count](Node& node) {
    Tensor& g = node.inputs[0]->grad_buffer();
    const float d = node.grad[0] / static_cast<float>(count);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += d;
  });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<float>& weights) {
  if (scalars.size() != weights.size()) throw InvalidArgument("weighted_sum: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    acc += static_cast<double>(weights[i]) * scalars[i].value()[0];
  }
  return make_result(Tensor({1}, static_cast<float>(acc)), scalars, [weights](Node& node) {
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (node.inputs[i]->requires_grad) node.inputs[i]->grad_buffer()[0] += weights[i] * node.grad[0];
    }
  });
}

}  // namespace xview::ops
