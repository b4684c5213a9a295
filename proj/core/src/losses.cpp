#include "xview/losses.hpp"

#include <algorithm>

#include "xview/error.hpp"

namespace xview {

void LossConfig::validate(int num_classes) const {
  if (static_cast<int>(class_weights.size()) != num_classes) {
    throw ConfigurationError("loss config: expected " + std::to_string(num_classes) + " class weights, got " +
                             std::to_string(class_weights.size()));
  }
  for (float w : class_weights) {
    if (!(w > 0.0f)) throw ConfigurationError("loss config: class weights must be strictly positive");
  }
  if (!(lambda_syn > 0 && lambda_fea > 0 && lambda_sem > 0 && lambda_ae > 0)) {
    throw ConfigurationError("loss config: lambda weights must be strictly positive");
  }
}

double total_loss(const LossReport& parts, const LossConfig& cfg) {
  return cfg.lambda_syn * parts.syn + cfg.lambda_fea * parts.fea + cfg.lambda_sem * parts.sem +
         cfg.lambda_ae * parts.ae + parts.adv_g;
}

std::pair<double, double> adversarial_losses(std::span<const float> d_real, std::span<const float> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw InvalidArgument("adversarial_losses: empty score map");
  auto clamp = [](double p) { return std::clamp(p, kAdversarialEps, 1.0 - kAdversarialEps); };
  double log_real = 0.0, log_one_minus_fake = 0.0, log_fake = 0.0;
  for (float p : d_real) log_real += std::log(clamp(p));
  for (float p : d_fake) {
    log_one_minus_fake += std::log(1.0 - clamp(p));
    log_fake += std::log(clamp(p));
  }
  log_real /= static_cast<double>(d_real.size());
  log_one_minus_fake /= static_cast<double>(d_fake.size());
  log_fake /= static_cast<double>(d_fake.size());
  return {-(log_real + log_one_minus_fake), -log_fake};
}

void require_one_hot(const Tensor& mask) {
  if (mask.rank() != 4) throw ShapeError("mask must be N x c x H x W, got " + shape_str(mask.shape()));
  const int n = mask.dim(0), c = mask.dim(1);
  const std::size_t plane = static_cast<std::size_t>(mask.dim(2)) * mask.dim(3);
  for (int b = 0; b < n; ++b) {
    const float* m = mask.data() + static_cast<std::size_t>(b) * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      float s = 0.0f;
      for (int k = 0; k < c; ++k) {
        const float v = m[k * plane + p];
        if (v != 0.0f && v != 1.0f) throw InvalidMask("mask is not one-hot (fractional entry)");
        s += v;
      }
      if (s != 1.0f) throw InvalidMask("mask is not one-hot (pixel sum " + std::to_string(s) + ")");
    }
  }
}

Tensor hard_mask(const Tensor& soft) {
  if (soft.rank() != 4) throw ShapeError("hard_mask: expected N x c x H x W");
  Tensor out(soft.shape());
  const std::vector<int> labels = mask_labels(soft);
  const int c = soft.dim(1);
  const std::size_t plane = static_cast<std::size_t>(soft.dim(2)) * soft.dim(3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t b = i / plane, p = i % plane;
    out[(b * c + labels[i]) * plane + p] = 1.0f;
  }
  return out;
}

std::vector<int> mask_labels(const Tensor& mask) {
  if (mask.rank() != 4) throw ShapeError("mask_labels: expected N x c x H x W");
  const int n = mask.dim(0), c = mask.dim(1);
  const std::size_t plane = static_cast<std::size_t>(mask.dim(2)) * mask.dim(3);
  std::vector<int> labels(static_cast<std::size_t>(n) * plane);
  for (int b = 0; b < n; ++b) {
    const float* m = mask.data() + static_cast<std::size_t>(b) * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      int best = 0;
      for (int k = 1; k < c; ++k) {
        if (m[k * plane + p] > m[best * plane + p]) best = k;
      }
      labels[b * plane + p] = best;
    }
  }
  return labels;
}

Tensor downsample_mask(const Tensor& mask, int height, int width) {
  if (mask.rank() != 4) throw ShapeError("downsample_mask: expected N x c x H x W");
  const int n = mask.dim(0), c = mask.dim(1), h = mask.dim(2), w = mask.dim(3);
  Tensor out({n, c, height, width});
  for (int b = 0; b < n; ++b)
    for (int k = 0; k < c; ++k)
      for (int i = 0; i < height; ++i) {
        const int si = std::min(h - 1, static_cast<int>((i + 0.5) * h / height));
        for (int j = 0; j < width; ++j) {
          const int sj = std::min(w - 1, static_cast<int>((j + 0.5) * w / width));
          out.at(b, k, i, j) = mask.at(b, k, si, sj);
        }
      }
  return out;
}

namespace {

struct MaskedL1Layout {
  int batch;
  int channels;
  int classes;
  std::size_t plane;
};

MaskedL1Layout check_masked_inputs(const Tensor& ref, const Tensor& mask, std::size_t branches,
                                   std::span<const float> weights) {
  if (ref.rank() != 4) throw ShapeError("masked L1: reference must be N x C x H x W");
  require_one_hot(mask);
  if (mask.dim(0) != ref.dim(0) || mask.dim(2) != ref.dim(2) || mask.dim(3) != ref.dim(3)) {
    throw ShapeError("masked L1: mask " + shape_str(mask.shape()) + " does not cover " + shape_str(ref.shape()));
  }
  const int classes = mask.dim(1);
  if (static_cast<int>(branches) != classes) {
    throw ConfigurationError("masked L1: " + std::to_string(branches) + " branches for " + std::to_string(classes) +
                             " classes");
  }
  if (static_cast<int>(weights.size()) != classes) throw ConfigurationError("masked L1: class weight count mismatch");
  return {ref.dim(0), ref.dim(1), classes, static_cast<std::size_t>(ref.dim(2)) * ref.dim(3)};
}

Var masked_l1(const Tensor& ref, const std::vector<Var>& preds, const Tensor& mask, std::span<const float> weights,
              std::vector<double>* per_class) {
  const MaskedL1Layout L = check_masked_inputs(ref, mask, preds.size(), weights);
  for (const Var& p : preds) require_same_shape(p.value(), ref, "masked L1 prediction");
  const std::size_t item = static_cast<std::size_t>(L.channels) * L.plane;
  const std::size_t mask_item = static_cast<std::size_t>(L.classes) * L.plane;
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<double> class_sum(L.classes, 0.0);
  std::vector<double> ref_d(item), mask_d(mask_item);
  std::vector<std::vector<double>> pred_d(L.classes, std::vector<double>(item));
  for (int b = 0; b < L.batch; ++b) {
    std::copy_n(ref.data() + b * item, item, ref_d.begin());
    std::copy_n(mask.data() + b * mask_item, mask_item, mask_d.begin());
    std::vector<const double*> ptrs;
    for (int i = 0; i < L.classes; ++i) {
      std::copy_n(preds[i].value().data() + b * item, item, pred_d[i].begin());
      ptrs.push_back(pred_d[i].data());
    }
    const auto terms = kernels::masked_l1_terms<double>(ref_d.data(), ptrs, L.channels, L.plane, mask_d.data(), w);
    for (int i = 0; i < L.classes; ++i) class_sum[i] += terms[i];
  }
  double total = 0.0;
  for (int i = 0; i < L.classes; ++i) {
    class_sum[i] /= L.batch;
    total += class_sum[i];
  }
  if (per_class) *per_class = class_sum;

  // Unique inputs for the graph; the synthesis loss passes one Var for every class.
  std::vector<Var> inputs;
  std::vector<int> slot(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto it = std::find_if(inputs.begin(), inputs.end(), [&](const Var& v) { return v.node() == preds[i].node(); });
    slot[i] = static_cast<int>(it - inputs.begin());
    if (it == inputs.end()) inputs.push_back(preds[i]);
  }
  Tensor ref_copy = ref;
  Tensor mask_copy = mask;
  return make_result(Tensor({1}, static_cast<float>(total)), std::move(inputs),
                     [=](Node& node) {
                       const double up = node.grad[0] / static_cast<double>(L.batch);
                       std::vector<double> rd(item), md(mask_item);
                       std::vector<std::vector<double>> pd(L.classes, std::vector<double>(item));
                       std::vector<std::vector<double>> gd(L.classes, std::vector<double>(item));
                       for (int b = 0; b < L.batch; ++b) {
                         std::copy_n(ref_copy.data() + b * item, item, rd.begin());
                         std::copy_n(mask_copy.data() + b * mask_item, mask_item, md.begin());
                         std::vector<const double*> pp;
                         std::vector<double*> gp;
                         for (int i = 0; i < L.classes; ++i) {
                           const Node& in = *node.inputs[slot[i]];
                           std::copy_n(in.value.data() + b * item, item, pd[i].begin());
                           std::fill(gd[i].begin(), gd[i].end(), 0.0);
                           pp.push_back(pd[i].data());
                           gp.push_back(in.requires_grad ? gd[i].data() : nullptr);
                         }
                         kernels::masked_l1_backward<double>(rd.data(), pp, L.channels, L.plane, md.data(), w, up, gp);
                         for (int i = 0; i < L.classes; ++i) {
                           Node& in = *node.inputs[slot[i]];
                           if (!in.requires_grad) continue;
                           float* g = in.grad_buffer().data() + b * item;
                           for (std::size_t e = 0; e < item; ++e) g[e] += static_cast<float>(gd[i][e]);
                         }
                       }
                     });
}

Var mean_abs(const Tensor& target, const Var& pred, const char* what) {
  require_same_shape(target, pred.value(), what);
  const std::size_t n = target.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(target[i]) - pred.value()[i]);
  Tensor t = target;
  return make_result(Tensor({1}, static_cast<float>(acc / n)), {pred}, [t, n](Node& node) {
    Node& in = *node.inputs[0];
    Tensor& g = in.grad_buffer();
    const float scale = node.grad[0] / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float d = in.value[i] - t[i];
      g[i] += scale * static_cast<float>((d > 0.0f) - (d < 0.0f));
    }
  });
}

}  // namespace

Var semantic_synthesis_loss(const Tensor& real, const Var& fake, const Tensor& mask,
                            std::span<const float> class_weights, std::vector<double>* per_class) {
  const int classes = mask.rank() == 4 ? mask.dim(1) : 0;
  std::vector<Var> preds(static_cast<std::size_t>(std::max(classes, 0)), fake);
  return masked_l1(real, preds, mask, class_weights, per_class);
}

Var semantic_feature_loss(const Tensor& reference, const std::vector<Var>& branches, const Tensor& mask,
                          std::span<const float> class_weights) {
  return masked_l1(reference, branches, mask, class_weights, nullptr);
}

Var semantic_consistency_loss(const Tensor& real_soft, const Var& fake_soft) {
  return mean_abs(real_soft, fake_soft, "semantic consistency loss");
}

Var autoencoding_loss(const Tensor& real, const Var& reconstruction) {
  return mean_abs(real, reconstruction, "autoencoding loss");
}

Var adversarial_bce(const Var& logits, bool target_real) {
  const Tensor& z = logits.value();
  const std::size_t n = z.numel();
  if (n == 0) throw InvalidArgument("adversarial_bce: empty score map");
  const double lo = -std::log1p(-kAdversarialEps);
  const double hi = -std::log(kAdversarialEps);
  double acc = 0.0;
  std::vector<float> dloss(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = target_real ? -static_cast<double>(z[i]) : static_cast<double>(z[i]);
    // softplus(v) = -log(sigmoid(-v))
    const double sp = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    const double sig = 1.0 / (1.0 + std::exp(-v));
    const bool clamped = sp <= lo || sp >= hi;
    acc += std::clamp(sp, lo, hi);
    const double d = clamped ? 0.0 : sig;  // d softplus(v)/dv
    dloss[i] = static_cast<float>(target_real ? -d : d);
  }
  return make_result(Tensor({1}, static_cast<float>(acc / n)), {logits}, [dloss, n](Node& node) {
    Tensor& g = node.inputs[0]->grad_buffer();
    const float scale = node.grad[0] / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) g[i] += scale * dloss[i];
  });
}

}  // namespace xview
