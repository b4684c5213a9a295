#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "xview/autograd.hpp"
#include "xview/tensor.hpp"

namespace xview::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Worst relative error between an analytic gradient and central differences of f at x.
/// Relative to max(|a|, |n|, floor) per coordinate.
inline double max_fd_error(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                           const std::vector<double>& analytic, double step, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

/// Float autograd check: the scalar is sum(out * probe) so its gradient splits cleanly.
/// Returns the worst relative error over every element of `inputs[which]`, or the given
/// quantile of the errors (for networks whose ReLU/max-pool kinks spoil a few coordinates).
inline double autograd_fd_error(const std::function<Var(const std::vector<Var>&)>& op, std::vector<Tensor> inputs,
                                std::size_t which, std::uint64_t seed, float step = 1e-2f, double quantile = 1.0) {
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(Var::leaf(inputs[i], i == which));
  const Var out = op(vars);
  const Tensor probe = random_tensor(out.shape(), seed);
  auto scalar = [&](const std::vector<Var>& vs) {
    NoGradGuard guard;
    const Var r = op(vs);
    const Tensor& o = r.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < o.numel(); ++i) acc += static_cast<double>(o[i]) * probe[i];
    return acc;
  };
  {
    // Reduce sum(out * probe) inside the graph so backward seeds out with probe.
    const Var loss = make_result(Tensor(Shape{1}), {out}, [probe](Node& n) {
      Tensor& g = n.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0] * probe[i];
    });
    backward(loss);
  }
  const Tensor analytic = vars[which].grad();
  std::vector<double> errors;
  for (std::size_t i = 0; i < inputs[which].numel(); ++i) {
    std::vector<Var> vs;
    const float keep = inputs[which][i];
    inputs[which][i] = keep + step;
    for (auto& t : inputs) vs.push_back(Var::leaf(t));
    const double up = scalar(vs);
    vs.clear();
    inputs[which][i] = keep - step;
    for (auto& t : inputs) vs.push_back(Var::leaf(t));
    const double down = scalar(vs);
    inputs[which][i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double scale = std::max({std::abs(numeric), std::abs(a), 1e-2});
    errors.push_back(std::abs(numeric - a) / scale);
  }
  if (errors.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(quantile * static_cast<double>(errors.size() - 1));
  std::nth_element(errors.begin(), errors.begin() + static_cast<std::ptrdiff_t>(k), errors.end());
  return errors[k];
}

inline Tensor to_tensor(const std::vector<double>& v, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

}  // namespace xview::test
