#pragma once

#include <string>
#include <vector>

#include "xview/nn.hpp"

namespace xview {

class TensorArchive;

struct AdamConfig {
  float learning_rate = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam with bias correction and a constant learning rate. Parameters
/// without a gradient in a step are left untouched.
class Adam {
 public:
  Adam(std::vector<NamedParameter> params, AdamConfig cfg);

  void step();
  void zero_grad();

  long step_count() const { return step_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  bool owns(const Var& v) const;

  void save_state(TensorArchive& archive, const std::string& prefix) const;
  void load_state(const TensorArchive& archive, const std::string& prefix);

 private:
  std::vector<NamedParameter> params_;
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace xview
