// Acceptance checks: one PASS/FAIL line per criterion.
// Usage: xview_acceptance [--only N] [--overfit-steps N] [--overfit-lr X]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support.hpp"
#include "xview/checkpoint.hpp"
#include "xview/config.hpp"
#include "xview/geometry.hpp"
#include "xview/losses.hpp"
#include "xview/metrics.hpp"
#include "xview/ops.hpp"
#include "xview/probes.hpp"
#include "xview/training.hpp"

using namespace xview;
using test::max_fd_error;
using test::random_tensor;
using test::random_vector;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> failed;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failed.push_back(what);
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void off_kinks(std::vector<double>& v) {
  for (auto& x : v) {
    if (std::abs(x - std::round(x)) < 0.05) x += 0.1;
  }
}

std::vector<double> mask_for(std::size_t classes, std::size_t plane, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> m(classes * plane, 0.0);
  for (std::size_t p = 0; p < plane; ++p) m[(rng() % classes) * plane + p] = 1.0;
  return m;
}

std::vector<double> away_from(const std::vector<double>& ref, std::uint64_t seed) {
  auto v = random_vector(ref.size(), seed);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i] - ref[i]) < 1e-3) v[i] = ref[i] + 0.01;
  }
  return v;
}

// 1: 64-bit analytic vs central-difference gradients.
Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  auto record = [&](double e, const char* name) {
    worst = std::max(worst, e);
    o.check(e < 1e-4, name);
  };
  const double step = 1e-4;
  {
    const int c = 4, sh = 6, sw = 7, th = 4, tw = 5;
    const auto feature = random_vector(static_cast<std::size_t>(c) * sh * sw, 1);
    auto coords = random_vector(2u * th * tw, 2, 0.2, 5.8);
    off_kinks(coords);
    const auto probe = random_vector(static_cast<std::size_t>(c) * th * tw, 3);
    auto loss = [&](const std::vector<double>& f, const std::vector<double>& g) {
      std::vector<double> out(probe.size());
      kernels::bilinear_forward(f.data(), c, sh, sw, g.data(), th, tw, out.data());
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * probe[i];
      return acc;
    };
    std::vector<double> gf(feature.size()), gc(coords.size());
    kernels::bilinear_backward(feature.data(), c, sh, sw, coords.data(), th, tw, probe.data(), gf.data(), gc.data());
    record(max_fd_error([&](const auto& f) { return loss(f, coords); }, feature, gf, step), "bilinear feature");
    record(max_fd_error([&](const auto& g) { return loss(feature, g); }, coords, gc, step), "bilinear coords");
  }
  {
    const int ci = 3, h = 5, w = 6, co = 4, k = 3;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const auto input = random_vector(ci * plane, 11);
    auto offsets = random_vector(2 * k * k * plane, 12, -0.9, 0.9);
    off_kinks(offsets);
    const auto weight = random_vector(static_cast<std::size_t>(co) * ci * k * k, 13);
    const auto bias = random_vector(co, 14);
    const auto probe = random_vector(co * plane, 15);
    auto loss = [&](const std::vector<double>& x, const std::vector<double>& off, const std::vector<double>& wt,
                    const std::vector<double>& b) {
      std::vector<double> out(co * plane), scratch;
      kernels::deform_conv_forward(x.data(), ci, h, w, off.data(), wt.data(), b.data(), co, k, out.data(), scratch);
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * probe[i];
      return acc;
    };
    std::vector<double> gx(input.size()), goff(offsets.size()), gw(weight.size()), gb(bias.size()), scratch;
    kernels::deform_conv_backward(input.data(), ci, h, w, offsets.data(), weight.data(), co, k, probe.data(),
                                  gx.data(), goff.data(), gw.data(), gb.data(), scratch);
    record(max_fd_error([&](const auto& v) { return loss(v, offsets, weight, bias); }, input, gx, step),
           "deform input");
    record(max_fd_error([&](const auto& v) { return loss(input, v, weight, bias); }, offsets, goff, step),
           "deform offsets");
    record(max_fd_error([&](const auto& v) { return loss(input, offsets, v, bias); }, weight, gw, step),
           "deform weight");
    record(max_fd_error([&](const auto& v) { return loss(input, offsets, weight, v); }, bias, gb, step),
           "deform bias");
  }
  const int c = 3, classes = 4;
  const std::size_t plane = 8 * 16;
  const std::vector<double> w{0.5, 2.0, 1.0, 1.0};
  const auto mask = mask_for(classes, plane, 21);
  const auto ref = random_vector(c * plane, 22);
  {
    const auto pred = away_from(ref, 23);
    auto f = [&](const std::vector<double>& p) {
      std::vector<const double*> ptr(classes, p.data());
      double s = 0.0;
      for (double v : kernels::masked_l1_terms<double>(ref.data(), ptr, c, plane, mask.data(), w)) s += v;
      return s;
    };
    std::vector<double> g(pred.size());
    std::vector<const double*> ptr(classes, pred.data());
    std::vector<double*> gp(classes, g.data());
    kernels::masked_l1_backward<double>(ref.data(), ptr, c, plane, mask.data(), w, 1.0, gp);
    record(max_fd_error(f, pred, g, 1e-5), "L_Syn");
  }
  {
    std::vector<std::vector<double>> branches;
    for (int i = 0; i < classes; ++i) branches.push_back(away_from(ref, 30 + i));
    std::vector<std::vector<double>> grads(classes, std::vector<double>(c * plane, 0.0));
    std::vector<const double*> ptr;
    std::vector<double*> gp;
    for (int i = 0; i < classes; ++i) {
      ptr.push_back(branches[i].data());
      gp.push_back(grads[i].data());
    }
    kernels::masked_l1_backward<double>(ref.data(), ptr, c, plane, mask.data(), w, 1.0, gp);
    for (int which = 0; which < classes; ++which) {
      auto f = [&](const std::vector<double>& x) {
        auto p = ptr;
        p[which] = x.data();
        double s = 0.0;
        for (double v : kernels::masked_l1_terms<double>(ref.data(), p, c, plane, mask.data(), w)) s += v;
        return s;
      };
      record(max_fd_error(f, branches[which], grads[which], 1e-5), "L_Fea");
    }
  }
  // L_Sem compares soft masks, L_AE images; both are a mean absolute difference.
  for (std::uint64_t seed : {41u, 42u}) {
    const auto a = random_vector(classes * plane, seed, 0.0, 1.0);
    auto b = random_vector(classes * plane, seed + 100, 0.0, 1.0);
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (std::abs(b[i] - a[i]) < 1e-3) b[i] = a[i] + 0.01;
    }
    auto f = [&](const std::vector<double>& x) { return kernels::mean_abs_diff(a.data(), x.data(), x.size()); };
    std::vector<double> g(b.size());
    kernels::mean_abs_diff_backward(a.data(), b.data(), b.size(), 1.0, g.data());
    record(max_fd_error(f, b, g, 1e-5), seed == 41u ? "L_Sem" : "L_AE");
  }
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime");
  o.detail << "max rel err " << std::scientific << std::setprecision(2) << worst << std::fixed << ", "
           << std::setprecision(2) << secs << " s";
  return o;
}

// 2: zero offsets reduce to a plain convolution.
Outcome zero_offset_reduction() {
  Outcome o;
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const Tensor x = random_tensor({2, 5, 9, 11}, 100 + draw);
    const Tensor w = random_tensor({6, 5, 3, 3}, 200 + draw);
    const Tensor b = random_tensor({6}, 300 + draw);
    const Tensor off({2, 18, 9, 11});
    const Tensor d = deformable_conv(Var::leaf(x), Var::leaf(off), Var::leaf(w), Var::leaf(b)).value();
    const Tensor p = ops::conv2d(Var::leaf(x), Var::leaf(w), Var::leaf(b), 1, 1).value();
    for (std::size_t i = 0; i < d.numel(); ++i) worst = std::max(worst, static_cast<double>(std::abs(d[i] - p[i])));
  }
  o.check(worst < 1e-5, "max abs diff");
  o.detail << "max abs diff " << std::scientific << std::setprecision(2) << worst << " over 20 draws";
  return o;
}

// 3: ring-constant aerial -> row-constant panorama; synthetic ground = polar-resampled aerial.
Outcome polar_geometry() {
  Outcome o;
  const int s = 256, h = 128, w = 512;
  const double radii[] = {30.0, 62.0, 95.0};
  const float colors[] = {0.9f, -0.4f, 0.3f, 0.6f};
  Tensor aerial({1, 1, s, s});
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double r = std::hypot(x - s / 2.0, y - s / 2.0);
      int k = 0;
      while (k < 3 && r >= radii[k]) ++k;
      aerial.at(0, 0, y, x) = colors[k];
    }
  const PolarGrid grid = build_polar_grid(s, h, w);
  const Tensor pano = bilinear_sample(Var::leaf(aerial), grid).value();
  double worst_std = 0.0;
  int rows = 0;
  for (int i = 0; i < h; ++i) {
    const double r = (s / 2.0) * (h - i) / h;
    bool boundary = r > s / 2.0 - 2.0;
    for (double b : radii) boundary = boundary || std::abs(r - b) < 2.0;
    if (boundary) continue;
    double m = 0.0, v = 0.0;
    for (int j = 0; j < w; ++j) m += pano.at(0, 0, i, j);
    m /= w;
    for (int j = 0; j < w; ++j) v += (pano.at(0, 0, i, j) - m) * (pano.at(0, 0, i, j) - m);
    worst_std = std::max(worst_std, std::sqrt(v / w));
    ++rows;
  }
  o.check(worst_std < 1e-3 && rows > h / 2, "row std");
  double worst_pair = 0.0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const ScenePair p = generate_synthetic_pair(seed);
    const Tensor re = bilinear_sample(Var::leaf(p.aerial.reshaped({1, 3, s, s})), grid).value();
    for (std::size_t i = 0; i < re.numel(); ++i)
      worst_pair = std::max(worst_pair, static_cast<double>(std::abs(re[i] - p.ground[i])));
  }
  o.check(worst_pair < 1e-6, "synthetic pairs");
  o.detail << "max row std " << std::scientific << std::setprecision(2) << worst_std << " over " << rows
           << " rows; pair max diff " << worst_pair;
  return o;
}

Tensor labels_to_mask(const std::vector<int>& labels, int c, int h, int w) {
  Tensor m({1, c, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < labels.size(); ++p) m[labels[p] * plane + p] = 1.0f;
  return m;
}

// 4: the three hand-computed loss values.
Outcome loss_oracles() {
  Outcome o;
  const std::vector<float> w12{1.0f, 2.0f};
  const double syn =
      semantic_synthesis_loss(Tensor({1, 1, 2, 2}), Var::leaf(Tensor({1, 1, 2, 2}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f})),
                              labels_to_mask({0, 1, 0, 1}, 2, 2, 2), w12)
          .value()[0];
  const std::vector<float> w11{1.0f, 1.0f};
  const double fea = semantic_feature_loss(Tensor({1, 6, 2, 4}, 0.25f),
                                           {Var::leaf(Tensor({1, 6, 2, 4}, 1.25f)), Var::leaf(Tensor({1, 6, 2, 4}, -0.75f))},
                                           labels_to_mask({0, 0, 1, 1, 0, 1, 1, 1}, 2, 2, 4), w11)
                         .value()[0];
  const std::vector<float> half(32, 0.5f);
  const double adv = adversarial_losses(half, half).first;
  const double adv_expected = -2.0 * std::log(0.5);
  o.check(std::abs(syn - 0.8) < 1e-6, "L_Syn toy");
  o.check(std::abs(fea - 2.0) < 1e-6, "L_Fea toy");
  o.check(std::abs(adv - adv_expected) < 1e-6, "adversarial");
  o.detail << std::setprecision(7) << "L_Syn " << syn << ", L_Fea " << fea << ", adv_d " << adv;
  return o;
}

// 5: default configuration.
Outcome default_constants() {
  Outcome o;
  const RunConfig c;
  o.check(c.loss.class_weights == std::vector<float>{0.5f, 2.0f, 1.0f, 1.0f}, "w");
  o.check(c.loss.lambda_syn == 10.0f && c.loss.lambda_fea == 2.0f && c.loss.lambda_sem == 2.0f &&
              c.loss.lambda_ae == 5.0f,
          "lambda");
  o.check(c.train.learning_rate == 2e-4f, "lr");
  o.check(c.train.adam_beta1 == 0.5f && c.train.adam_beta2 == 0.999f, "betas");
  o.check(c.train.init_std == 0.02f, "init std");
  o.check(c.train.epochs == 30 && c.train.batch_size == 4, "epochs/batch");
  o.check(c.generator.aerial_size == 256 && c.generator.ground_height == 128 && c.generator.ground_width == 512,
          "shapes");
  o.check(c.generator.num_classes == 4 && kNumClasses == 4, "classes");
  o.detail << "w=(0.5,2,1,1) lambda=(10,2,2,5) lr 2e-4 betas (0.5,0.999) std 0.02 30x4 256/128x512 c=4";
  return o;
}

struct OverfitOptions {
  int steps = 500;
  float learning_rate = 2e-4f;
  int base_channels = 8;
  int encoder_blocks = 4;
  int decoder_blocks = 5;
  bool verbose = false;
};

double mean_syn(const Generator& g, const std::vector<ScenePair>& pairs, const LossConfig& loss) {
  NoGradGuard guard;
  double acc = 0.0;
  for (const auto& p : pairs) {
    const std::vector<ScenePair> one{p};
    const Batch b = make_batch(one);
    const SynthesisOutputs out = g.synthesize(Var::leaf(b.aerial));
    acc += semantic_synthesis_loss(b.ground, out.image, *b.mask, loss.class_weights).value()[0];
  }
  return acc / static_cast<double>(pairs.size());
}

// L_Syn of an output that is exact except that every class takes its colour averaged over
// the set: what remains is the per-pair palette offset.
double palette_floor(const std::vector<ScenePair>& pairs, const LossConfig& loss) {
  const int c = kNumClasses;
  const std::size_t plane = pairs[0].ground.numel() / 3;
  std::vector<std::array<double, 3>> mean(pairs.size() * c, {0.0, 0.0, 0.0});
  std::vector<double> count(pairs.size() * c, 0.0);
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const Tensor& m = *pairs[n].ground_mask;
    for (int k = 0; k < c; ++k)
      for (std::size_t p = 0; p < plane; ++p) {
        if (m[k * plane + p] < 0.5f) continue;
        count[n * c + k] += 1.0;
        for (int ch = 0; ch < 3; ++ch) mean[n * c + k][ch] += pairs[n].ground[ch * plane + p];
      }
  }
  for (std::size_t i = 0; i < mean.size(); ++i)
    for (auto& v : mean[i]) v /= std::max(count[i], 1.0);
  double total = 0.0;
  for (std::size_t n = 0; n < pairs.size(); ++n)
    for (int k = 0; k < c; ++k) {
      if (count[n * c + k] == 0.0) continue;
      std::array<double, 3> set_mean{0.0, 0.0, 0.0};
      int present = 0;
      for (std::size_t m = 0; m < pairs.size(); ++m) {
        if (count[m * c + k] == 0.0) continue;
        ++present;
        for (int ch = 0; ch < 3; ++ch) set_mean[ch] += mean[m * c + k][ch];
      }
      double d = 0.0;
      for (int ch = 0; ch < 3; ++ch) d += std::abs(mean[n * c + k][ch] - set_mean[ch] / present);
      total += loss.class_weights[k] * d / 3.0;
    }
  return total / static_cast<double>(pairs.size());
}

// 6: overfit 8 synthetic pairs.
Outcome overfit(const OverfitOptions& opt) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto pairs = std::make_shared<std::vector<ScenePair>>(generate_synthetic_set(8, 1));
  const PairProvider data = PairProvider::from_pairs(pairs);

  auto seg = std::make_shared<Segmenter>(SegmenterConfig{SegmenterArch::Tiny, 8, kNumClasses});
  train_segmenter(*seg, data, ProbeTrainConfig{});
  const double seg_secs = seconds_since(t0);

  GeneratorConfig gc;
  gc.base_channels = opt.base_channels;
  gc.encoder_blocks = opt.encoder_blocks;
  gc.decoder_blocks = opt.decoder_blocks;
  gc.feature_channels = 32;
  gc.discriminator_channels = 8;
  gc.attention_reduction = 4;
  const LossConfig lc;
  TrainConfig tc;
  tc.batch_size = 1;
  tc.mask_source = MaskSource::Dataset;
  tc.seed = 0;
  tc.learning_rate = opt.learning_rate;
  Trainer trainer(gc, lc, tc, seg);

  const auto t1 = Clock::now();
  double syn10 = 0.0;
  long step = 0;
  for (int epoch = 0; step < opt.steps; ++epoch) {
    for (std::size_t idx : epoch_order(pairs->size(), tc.seed, epoch)) {
      if (step >= opt.steps) break;
      const std::vector<ScenePair> one{(*pairs)[idx]};
      trainer.train_step(make_batch(one));
      ++step;
      if (step == 10) syn10 = mean_syn(trainer.generator(), *pairs, lc);
      if (opt.verbose && step % 50 == 0) {
        std::cerr << "  step " << step << " L_Syn " << mean_syn(trainer.generator(), *pairs, lc) << " ("
                  << seconds_since(t1) << " s)" << std::endl;
      }
    }
  }
  const double train_secs = seconds_since(t1);
  const double syn_end = mean_syn(trainer.generator(), *pairs, lc);

  MiouAccumulator acc(kNumClasses);
  {
    NoGradGuard guard;
    for (const auto& p : *pairs) {
      const std::vector<ScenePair> one{p};
      const Batch b = make_batch(one);
      const Tensor fake = trainer.generator().synthesize(Var::leaf(b.aerial)).image.value();
      acc.add(mask_labels(seg->segment(Var::leaf(fake)).value()), mask_labels(*b.mask));
    }
  }
  const double ratio = syn10 > 0.0 ? syn_end / syn10 : 1.0;
  const double total_secs = seconds_since(t0);
  o.check(total_secs < 900.0, "15 min budget");
  o.check(ratio < 0.10, "L_Syn below 10% of step 10");
  o.check(acc.value() > 0.8, "mIoU");
  o.detail << std::setprecision(4) << "L_Syn step10 " << syn10 << " -> step" << opt.steps << " " << syn_end
           << " (ratio " << ratio << ", palette floor " << palette_floor(*pairs, lc) << "), mIoU " << acc.value()
           << ", " << std::fixed << std::setprecision(1) << total_secs << " s (segmenter " << seg_secs << " s, "
           << std::setprecision(0) << train_secs / std::max(1, opt.steps) * 1000.0 << " ms/step)";
  return o;
}

GeneratorConfig small_generator() {
  GeneratorConfig g;
  g.base_channels = 4;
  g.feature_channels = 8;
  g.encoder_blocks = 1;
  g.decoder_blocks = 1;
  g.attention_reduction = 4;
  g.discriminator_channels = 4;
  g.aerial_size = 64;
  g.ground_height = 32;
  g.ground_width = 128;
  return g;
}

const ImageSizes kSmall{64, 32, 128};

std::shared_ptr<Segmenter> small_segmenter() {
  auto s = std::make_shared<Segmenter>(SegmenterConfig{SegmenterArch::Tiny, 4, kNumClasses});
  init_weights(*s, 0.2f, 99);
  s->freeze();
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> csv_rows(const fs::path& p) {
  std::vector<std::string> rows;
  std::istringstream in(slurp(p));
  for (std::string l; std::getline(in, l);) rows.push_back(l);
  return rows;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "xview_acceptance" / name;
  fs::remove_all(d);
  return d;
}

LoopResult run_loop(const PairProvider& data, const TrainConfig& tc, const fs::path& dir, long max_steps = -1,
                    std::optional<fs::path> resume = std::nullopt) {
  Trainer t(small_generator(), LossConfig{}, tc, small_segmenter());
  LoopOptions opt;
  opt.run_dir = dir;
  opt.max_steps = max_steps;
  opt.resume_from = std::move(resume);
  return train_loop(data, t, tc, opt);
}

// 8: seeded determinism and resume equivalence.
Outcome determinism() {
  Outcome o;
  const PairProvider data =
      PairProvider::from_pairs(std::make_shared<std::vector<ScenePair>>(generate_synthetic_set(8, 3, kSmall)));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.seed = 5;
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run_loop(data, tc, a, 5);
  run_loop(data, tc, b, 5);
  const auto ra = csv_rows(a / kLossCsv), rb = csv_rows(b / kLossCsv);
  o.check(ra.size() == 6 && ra == rb, "5-step CSVs");

  const fs::path full = scratch("full"), part = scratch("part");
  run_loop(data, tc, full);
  TrainConfig first = tc;
  first.epochs = 1;
  run_loop(data, first, part);
  run_loop(data, tc, part, -1, part / "checkpoints" / checkpoint_name(1));
  const auto rf = csv_rows(full / kLossCsv), rp = csv_rows(part / kLossCsv);
  o.check(rf.size() == 9 && rf == rp, "resumed epoch-2 losses");
  o.detail << "5-step CSVs " << (ra == rb ? "identical" : "differ") << "; resumed epoch 2 "
           << (rf == rp ? "identical" : "differs") << " (" << rf.size() - 1 << " rows)";
  return o;
}

// 7: metric sanity.
Outcome metric_sanity() {
  Outcome o;
  const auto t0 = Clock::now();
  const Tensor img = random_tensor({3, 128, 512}, 7, 0.0f, 1.0f);
  o.check(psnr(img, img) == kMetricCapDb, "psnr cap");
  const double s = ssim(img, img);
  o.check(std::abs(s - 1.0) < 1e-6, "ssim identity");
  o.check(std::abs(inception_score(ProbTable(10, {0.1, 0.2, 0.3, 0.4})) - 1.0) < 1e-6, "IS constant");
  for (int n : {2, 5, 10}) {
    ProbTable p(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int i = 0; i < n; ++i) p[i][i] = 1.0;
    o.check(std::abs(inception_score(p) - n) < 1e-6, "IS one-hot");
  }
  const ProbTable q{{0.2, 0.8}, {0.5, 0.5}, {0.9, 0.1}};
  const auto [km, ks] = kl_divergence_metric(q, q);
  o.check(km == 0.0 && ks == 0.0, "KL identical");
  const std::vector<int> labels{0, 1, 2, 3, 3, 2};
  o.check(miou({labels}, {labels}) == 1.0, "mIoU perfect");
  o.check(miou({{0, 0, 0}}, {{2, 2, 2}}) == 0.0, "mIoU disjoint");
  const double secs = seconds_since(t0);
  o.check(secs < 30.0, "runtime");
  o.detail << std::setprecision(8) << "ssim(I,I) " << s << ", " << std::setprecision(2) << secs << " s";
  return o;
}

// 9: frozen segmenter across a full epoch.
Outcome frozen_segmenter() {
  Outcome o;
  const PairProvider data =
      PairProvider::from_pairs(std::make_shared<std::vector<ScenePair>>(generate_synthetic_set(8, 4, kSmall)));
  auto seg = small_segmenter();
  const std::uint64_t before = parameter_digest(*seg);
  TrainConfig tc;
  tc.epochs = 1;
  Trainer t(small_generator(), LossConfig{}, tc, seg);
  const std::uint64_t g_before = parameter_digest(t.generator());
  LoopOptions opt;
  opt.run_dir = scratch("frozen");
  const LoopResult r = train_loop(data, t, tc, opt);
  const std::uint64_t after = parameter_digest(*seg);
  o.check(before == after, "segmenter digest");
  o.check(parameter_digest(t.generator()) != g_before, "generator updated");
  o.check(r.epochs_completed == 1, "epoch");
  o.detail << "digest " << std::hex << before << " -> " << after << std::dec << " over " << r.steps << " steps";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  OverfitOptions overfit_opt;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--only") {
      only = std::atoi(argv[i + 1]);
    } else if (flag == "--overfit-steps") {
      overfit_opt.steps = std::atoi(argv[i + 1]);
    } else if (flag == "--overfit-base") {
      overfit_opt.base_channels = std::atoi(argv[i + 1]);
    } else if (flag == "--overfit-blocks") {
      overfit_opt.encoder_blocks = overfit_opt.decoder_blocks = std::atoi(argv[i + 1]);
    } else if (flag == "--overfit-verbose") {
      overfit_opt.verbose = std::atoi(argv[i + 1]) != 0;
    } else if (flag == "--overfit-lr") {
      overfit_opt.learning_rate = static_cast<float>(std::atof(argv[i + 1]));
    } else {
      std::cerr << "usage: xview_acceptance [--only N] [--overfit-steps N] [--overfit-lr X]\n";
      return 2;
    }
  }
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_suite},
      {2, zero_offset_reduction},
      {3, polar_geometry},
      {4, loss_oracles},
      {5, default_constants},
      {6, [&] { return overfit(overfit_opt); }},
      {7, metric_sanity},
      {8, determinism},
      {9, frozen_segmenter},
  };
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    if (only != 0 && id != only) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail.str();
    for (const auto& f : o.failed) std::cout << " [failed: " << f << "]";
    std::cout << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
