#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xview/autograd.hpp"

namespace xview {

/// How init_weights treats a parameter.
enum class ParamInit {
  Normal,  // N(0, init_std)
  Zero,    // biases and offset predictors
};

struct NamedParameter {
  std::string name;
  Var var;
  ParamInit init;
};

/// Parameter registry. Modules are neither copyable nor movable because
/// parents keep pointers to their child modules.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<NamedParameter> parameters(const std::string& prefix = "") const;
  std::size_t parameter_count() const;
  void zero_grad();
  void set_requires_grad(bool flag);

 protected:
  Var add_parameter(std::string name, Shape shape, ParamInit init);
  void add_child(std::string name, Module& child);

 private:
  void collect(std::vector<NamedParameter>& out, const std::string& prefix) const;

  std::vector<NamedParameter> params_;
  std::vector<std::pair<std::string, Module*>> children_;
};

class Conv2d : public Module {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = -1, bool bias = true,
         ParamInit weight_init = ParamInit::Normal);

  Var forward(const Var& x) const;

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  int out_channels() const { return out_channels_; }

 private:
  Var weight_;
  Var bias_;
  int out_channels_;
  int stride_;
  int padding_;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int padding, int output_padding);

  Var forward(const Var& x) const;

 private:
  Var weight_;
  Var bias_;
  int stride_;
  int padding_;
  int output_padding_;
};

class Linear : public Module {
 public:
  Linear(int in_features, int out_features);

  Var forward(const Var& x) const;

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_;
  Var bias_;
};

/// conv3x3 -> IN -> ReLU -> conv3x3 -> IN, plus identity skip.
class ResidualBlock : public Module {
 public:
  explicit ResidualBlock(int channels);

  Var forward(const Var& x) const;

 private:
  Conv2d conv1_;
  Conv2d conv2_;
};

}  // namespace xview
