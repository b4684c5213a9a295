#include "xview/geometry.hpp"

#include <numbers>

#include "xview/error.hpp"

namespace xview {

PolarGrid build_polar_grid(int aerial_size, int pano_height, int pano_width) {
  if (aerial_size < 1 || pano_height < 1 || pano_width < 1) {
    throw InvalidArgument("build_polar_grid: dimensions must be positive");
  }
  PolarGrid grid{aerial_size, pano_height, pano_width, Tensor({2, pano_height, pano_width})};
  const double half = aerial_size / 2.0;
  const std::size_t plane = static_cast<std::size_t>(pano_height) * pano_width;
  for (int i = 0; i < pano_height; ++i) {
    const double radius = half * static_cast<double>(pano_height - i) / pano_height;
    for (int j = 0; j < pano_width; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / pano_width;
      const std::size_t p = static_cast<std::size_t>(i) * pano_width + j;
      grid.coords[p] = static_cast<float>(half + radius * std::sin(theta));
      grid.coords[plane + p] = static_cast<float>(half - radius * std::cos(theta));
    }
  }
  return grid;
}

namespace {

void require_finite_coords(const Tensor& coords) {
  if (!coords.all_finite()) throw InvalidInput("bilinear_sample: non-finite sampling coordinates");
}

}  // namespace

Var bilinear_sample(const Var& feature, const PolarGrid& grid) {
  const Tensor& f = feature.value();
  if (f.rank() != 4) throw ShapeError("bilinear_sample: feature must be N x C x H x W, got " + shape_str(f.shape()));
  require_shape(grid.coords, {2, grid.pano_height, grid.pano_width}, "bilinear_sample grid");
  require_finite_coords(grid.coords);
  const int n = f.dim(0), c = f.dim(1), hs = f.dim(2), ws = f.dim(3);
  const int ht = grid.pano_height, wt = grid.pano_width;
  const std::size_t in_stride = static_cast<std::size_t>(c) * hs * ws;
  const std::size_t out_stride = static_cast<std::size_t>(c) * ht * wt;
  Tensor out({n, c, ht, wt});
  for (int b = 0; b < n; ++b) {
    kernels::bilinear_forward(f.data() + b * in_stride, c, hs, ws, grid.coords.data(), ht, wt,
                              out.data() + b * out_stride);
  }
  Tensor coords = grid.coords;
  return make_result(std::move(out), {feature}, [=](Node& node) {
    Node& in = *node.inputs[0];
    Tensor& gin = in.grad_buffer();
    for (int b = 0; b < n; ++b) {
      kernels::bilinear_backward(in.value.data() + b * in_stride, c, hs, ws, coords.data(), ht, wt,
                                 node.grad.data() + b * out_stride, gin.data() + b * in_stride,
                                 static_cast<float*>(nullptr));
    }
  });
}

Var bilinear_sample(const Var& feature, const Var& coords) {
  const Tensor& f = feature.value();
  const Tensor& g = coords.value();
  if (f.rank() != 4) throw ShapeError("bilinear_sample: feature must be N x C x H x W, got " + shape_str(f.shape()));
  if (g.rank() != 4 || g.dim(0) != f.dim(0) || g.dim(1) != 2) {
    throw ShapeError("bilinear_sample: coords must be N x 2 x H_t x W_t, got " + shape_str(g.shape()));
  }
  require_finite_coords(g);
  const int n = f.dim(0), c = f.dim(1), hs = f.dim(2), ws = f.dim(3);
  const int ht = g.dim(2), wt = g.dim(3);
  const std::size_t in_stride = static_cast<std::size_t>(c) * hs * ws;
  const std::size_t out_stride = static_cast<std::size_t>(c) * ht * wt;
  const std::size_t grid_stride = static_cast<std::size_t>(2) * ht * wt;
  Tensor out({n, c, ht, wt});
  for (int b = 0; b < n; ++b) {
    kernels::bilinear_forward(f.data() + b * in_stride, c, hs, ws, g.data() + b * grid_stride, ht, wt,
                              out.data() + b * out_stride);
  }
  return make_result(std::move(out), {feature, coords}, [=](Node& node) {
    Node& fin = *node.inputs[0];
    Node& gin = *node.inputs[1];
    float* gf = fin.requires_grad ? fin.grad_buffer().data() : nullptr;
    float* gc = gin.requires_grad ? gin.grad_buffer().data() : nullptr;
    for (int b = 0; b < n; ++b) {
      kernels::bilinear_backward(fin.value.data() + b * in_stride, c, hs, ws, gin.value.data() + b * grid_stride,
                                 ht, wt, node.grad.data() + b * out_stride, gf ? gf + b * in_stride : nullptr,
                                 gc ? gc + b * grid_stride : nullptr);
    }
  });
}

Var deformable_conv(const Var& input, const Var& offsets, const Var& weight, const Var& bias) {
  const Tensor& x = input.value();
  const Tensor& off = offsets.value();
  const Tensor& w = weight.value();
  if (x.rank() != 4) throw ShapeError("deformable_conv: input must be N x C x H x W");
  if (w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0) {
    throw ShapeError("deformable_conv: weight must be C_out x C_in x K x K with odd K, got " + shape_str(w.shape()));
  }
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  if (off.rank() != 4 || off.dim(0) != n || off.dim(1) != 2 * k * k || off.dim(2) != h || off.dim(3) != wd) {
    throw ShapeError("deformable_conv: offsets must be " + shape_str({n, 2 * k * k, h, wd}) + ", got " +
                     shape_str(off.shape()));
  }
  if (bias.defined()) require_shape(bias.value(), {cout}, "deformable_conv bias");
  const std::size_t x_stride = static_cast<std::size_t>(cin) * h * wd;
  const std::size_t off_stride = static_cast<std::size_t>(2 * k * k) * h * wd;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * h * wd;
  Tensor out({n, cout, h, wd});
  std::vector<float> scratch;
  for (int b = 0; b < n; ++b) {
    kernels::deform_conv_forward(x.data() + b * x_stride, cin, h, wd, off.data() + b * off_stride, w.data(),
                                 bias.defined() ? bias.value().data() : nullptr, cout, k,
                                 out.data() + b * out_stride, scratch);
  }
  std::vector<Var> inputs{input, offsets, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [=](Node& node) {
    Node& xin = *node.inputs[0];
    Node& oin = *node.inputs[1];
    Node& win = *node.inputs[2];
    float* gx = xin.requires_grad ? xin.grad_buffer().data() : nullptr;
    float* go = oin.requires_grad ? oin.grad_buffer().data() : nullptr;
    float* gw = win.requires_grad ? win.grad_buffer().data() : nullptr;
    float* gb = nullptr;
    if (node.inputs.size() > 3 && node.inputs[3]->requires_grad) gb = node.inputs[3]->grad_buffer().data();
    std::vector<float> work;
    for (int b = 0; b < n; ++b) {
      kernels::deform_conv_backward(xin.value.data() + b * x_stride, cin, h, wd, oin.value.data() + b * off_stride,
                                    win.value.data(), cout, k, node.grad.data() + b * out_stride,
                                    gx ? gx + b * x_stride : nullptr, go ? go + b * off_stride : nullptr, gw, gb,
                                    work);
    }
  });
}

}  // namespace xview
