#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "xview/autograd.hpp"
#include "xview/networks.hpp"

namespace xview {

/// Class balancing weights (sky, man-made, road, vegetation) and objective weights.
struct LossConfig {
  std::vector<float> class_weights{0.5f, 2.0f, 1.0f, 1.0f};
  float lambda_syn = 10.0f;
  float lambda_fea = 2.0f;
  float lambda_sem = 2.0f;
  float lambda_ae = 5.0f;

  void validate(int num_classes) const;
};

struct LossReport {
  double syn = 0.0;
  double fea = 0.0;
  double sem = 0.0;
  double ae = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double total = 0.0;
  std::vector<double> per_class_syn;
};

/// lambda_syn*syn + lambda_fea*fea + lambda_sem*sem + lambda_ae*ae + adv_g.
double total_loss(const LossReport& parts, const LossConfig& cfg);

inline constexpr double kAdversarialEps = 1e-7;

/// Probability-domain adversarial terms, scores clamped to [eps, 1 - eps].
/// Returns (adv_d, adv_g) with adv_d = -[mean log D_real + mean log(1 - D_fake)]
/// and the non-saturating adv_g = -mean log D_fake.
std::pair<double, double> adversarial_losses(std::span<const float> d_real, std::span<const float> d_fake);

namespace kernels {

/// Per-class masked L1 terms for one sample: term_i = w_i / N_i * sum_{c,p} mask_i[p] |ref[c,p] - pred_i[c,p]|,
/// where N_i = channels * sum_p mask_i[p]. Empty classes give 0. `pred[i]` is the prediction compared
/// inside class i (the same pointer for every class in the synthesis loss).
template <class T>
std::vector<T> masked_l1_terms(const T* ref, std::span<const T* const> pred, int channels, std::size_t plane,
                               const T* mask, std::span<const T> weights) {
  const std::size_t classes = pred.size();
  std::vector<T> terms(classes, T(0));
  for (std::size_t i = 0; i < classes; ++i) {
    const T* m = mask + i * plane;
    T count = T(0);
    for (std::size_t p = 0; p < plane; ++p) count += m[p];
    if (count == T(0)) continue;
    T acc = T(0);
    for (int c = 0; c < channels; ++c) {
      const T* r = ref + c * plane;
      const T* q = pred[i] + c * plane;
      for (std::size_t p = 0; p < plane; ++p) acc += m[p] * std::abs(r[p] - q[p]);
    }
    terms[i] = weights[i] / (count * static_cast<T>(channels)) * acc;
  }
  return terms;
}

/// Accumulates upstream * d(sum_i term_i)/d(pred_i) into grad[i].
template <class T>
void masked_l1_backward(const T* ref, std::span<const T* const> pred, int channels, std::size_t plane, const T* mask,
                        std::span<const T> weights, T upstream, std::span<T* const> grad) {
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T* m = mask + i * plane;
    T count = T(0);
    for (std::size_t p = 0; p < plane; ++p) count += m[p];
    if (count == T(0) || grad[i] == nullptr) continue;
    const T scale = upstream * weights[i] / (count * static_cast<T>(channels));
    for (int c = 0; c < channels; ++c) {
      const T* r = ref + c * plane;
      const T* q = pred[i] + c * plane;
      T* g = grad[i] + c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const T d = q[p] - r[p];
        g[p] += scale * m[p] * static_cast<T>((d > T(0)) - (d < T(0)));
      }
    }
  }
}

/// mean |a - b|
template <class T>
T mean_abs_diff(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<T>(n);
}

/// Accumulates upstream * d(mean |a - b|)/db into grad_b.
template <class T>
void mean_abs_diff_backward(const T* a, const T* b, std::size_t n, T upstream, T* grad_b) {
  const T scale = upstream / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = b[i] - a[i];
    grad_b[i] += scale * static_cast<T>((d > T(0)) - (d < T(0)));
  }
}

}  // namespace kernels

/// Throws InvalidMask unless every pixel of an N x c x H x W mask is one-hot.
void require_one_hot(const Tensor& mask);

/// Argmax one-hot of a soft N x c x H x W mask (ties go to the lowest class).
Tensor hard_mask(const Tensor& soft);

/// Nearest-neighbour resize of a one-hot mask to height x width (pixel centers).
Tensor downsample_mask(const Tensor& mask, int height, int width);

/// Per-pixel class labels N x H x W from a (soft or hard) N x c x H x W mask.
std::vector<int> mask_labels(const Tensor& mask);

/// Class-balanced synthesis loss, averaged over the batch.
/// `per_class` (optional) receives the batch-mean of each class term.
Var semantic_synthesis_loss(const Tensor& real, const Var& fake, const Tensor& mask,
                            std::span<const float> class_weights, std::vector<double>* per_class = nullptr);

/// Per-branch feature loss: branch i is compared with the reference inside class mask i.
/// The reference is a constant (detached) tensor.
Var semantic_feature_loss(const Tensor& reference, const std::vector<Var>& branches, const Tensor& mask,
                          std::span<const float> class_weights);

/// Mean absolute difference between real-image and synthesized-image soft masks.
Var semantic_consistency_loss(const Tensor& real_soft, const Var& fake_soft);

/// Mean absolute reconstruction error.
Var autoencoding_loss(const Tensor& real, const Var& reconstruction);

/// -mean log(clamp(sigmoid(z))) for target 1, -mean log(1 - clamp(sigmoid(z))) for target 0.
Var adversarial_bce(const Var& logits, bool target_real);

}  // namespace xview
