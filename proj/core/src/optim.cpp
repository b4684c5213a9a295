#include "xview/optim.hpp"

#include <cmath>

#include "xview/checkpoint.hpp"
#include "xview/error.hpp"

namespace xview {

Adam::Adam(std::vector<NamedParameter> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
  const float b1 = cfg_.beta1, b2 = cfg_.beta2;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& var = params_[k].var;
    if (!var.has_grad()) continue;
    const Tensor& g = var.grad();
    Tensor& w = var.mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= static_cast<float>(cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

bool Adam::owns(const Var& v) const {
  for (const auto& p : params_) {
    if (p.var.node() == v.node()) return true;
  }
  return false;
}

void Adam::save_state(TensorArchive& archive, const std::string& prefix) const {
  archive.put(prefix + "step", Tensor({1}, static_cast<float>(step_)));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    archive.put(prefix + "m." + params_[k].name, m_[k]);
    archive.put(prefix + "v." + params_[k].name, v_[k]);
  }
}

void Adam::load_state(const TensorArchive& archive, const std::string& prefix) {
  step_ = static_cast<long>(archive.get(prefix + "step")[0]);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Tensor& m = archive.get(prefix + "m." + params_[k].name);
    const Tensor& v = archive.get(prefix + "v." + params_[k].name);
    if (m.shape() != m_[k].shape() || v.shape() != v_[k].shape()) {
      throw ConfigurationError("optimizer state shape mismatch for " + params_[k].name);
    }
    m_[k] = m;
    v_[k] = v;
  }
}

}  // namespace xview
