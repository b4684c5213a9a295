#include "xview/nn.hpp"

#include "xview/ops.hpp"

namespace xview {

std::vector<NamedParameter> Module::parameters(const std::string& prefix) const {
  std::vector<NamedParameter> out;
  collect(out, prefix);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.value().numel();
  return n;
}

void Module::zero_grad() {
  for (auto& p : parameters()) p.var.zero_grad();
}

void Module::set_requires_grad(bool flag) {
  for (auto& p : parameters()) p.var.set_requires_grad(flag);
}

Var Module::add_parameter(std::string name, Shape shape, ParamInit init) {
  Var v = Var::leaf(Tensor(std::move(shape)), true);
  params_.push_back({std::move(name), v, init});
  return v;
}

void Module::add_child(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

void Module::collect(std::vector<NamedParameter>& out, const std::string& prefix) const {
  for (const auto& p : params_) out.push_back({prefix + p.name, p.var, p.init});
  for (const auto& [name, child] : children_) child->collect(out, prefix + name + ".");
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias,
               ParamInit weight_init)
    : out_channels_(out_channels), stride_(stride), padding_(padding < 0 ? kernel / 2 : padding) {
  weight_ = add_parameter("weight", {out_channels, in_channels, kernel, kernel}, weight_init);
  if (bias) bias_ = add_parameter("bias", {out_channels}, ParamInit::Zero);
}

Var Conv2d::forward(const Var& x) const { return ops::conv2d(x, weight_, bias_, stride_, padding_); }

ConvTranspose2d::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int padding,
                                 int output_padding)
    : stride_(stride), padding_(padding), output_padding_(output_padding) {
  weight_ = add_parameter("weight", {in_channels, out_channels, kernel, kernel}, ParamInit::Normal);
  bias_ = add_parameter("bias", {out_channels}, ParamInit::Zero);
}

Var ConvTranspose2d::forward(const Var& x) const {
  return ops::conv_transpose2d(x, weight_, bias_, stride_, padding_, output_padding_);
}

Linear::Linear(int in_features, int out_features) {
  weight_ = add_parameter("weight", {out_features, in_features}, ParamInit::Normal);
  bias_ = add_parameter("bias", {out_features}, ParamInit::Zero);
}

Var Linear::forward(const Var& x) const { return ops::linear(x, weight_, bias_); }

ResidualBlock::ResidualBlock(int channels) : conv1_(channels, channels, 3), conv2_(channels, channels, 3) {
  add_child("conv1", conv1_);
  add_child("conv2", conv2_);
}

Var ResidualBlock::forward(const Var& x) const {
  Var h = ops::relu(ops::instance_norm(conv1_.forward(x)));
  h = ops::instance_norm(conv2_.forward(h));
  return ops::add(x, h);
}

}  // namespace xview
