#include "xview/probes.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "xview/checkpoint.hpp"
#include "xview/error.hpp"
#include "xview/ops.hpp"
#include "xview/optim.hpp"

namespace xview {

namespace fs = std::filesystem;

Var pixel_cross_entropy(const Var& logits, const Tensor& target) {
  const Tensor& z = logits.value();
  require_same_shape(z, target, "pixel_cross_entropy");
  if (z.rank() != 4) throw ShapeError("pixel_cross_entropy: expected N x c x H x W");
  const int n = z.dim(0), c = z.dim(1);
  const std::size_t plane = static_cast<std::size_t>(z.dim(2)) * z.dim(3);
  const double count = static_cast<double>(n) * plane;
  Tensor prob(z.shape());
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const float* src = z.data() + b * c * plane;
    const float* t = target.data() + b * c * plane;
    float* pr = prob.data() + b * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      float mx = src[p];
      for (int k = 1; k < c; ++k) mx = std::max(mx, src[k * plane + p]);
      double s = 0.0;
      for (int k = 0; k < c; ++k) s += std::exp(static_cast<double>(src[k * plane + p] - mx));
      const double lse = std::log(s) + mx;
      for (int k = 0; k < c; ++k) {
        pr[k * plane + p] = static_cast<float>(std::exp(src[k * plane + p] - lse));
        loss -= t[k * plane + p] * (src[k * plane + p] - lse);
      }
    }
  }
  Tensor target_copy = target;
  return make_result(Tensor({1}, static_cast<float>(loss / count)), {logits},
                     [prob = std::move(prob), t = std::move(target_copy), count](Node& node) {
                       Tensor& g = node.inputs[0]->grad_buffer();
                       const float s = static_cast<float>(node.grad[0] / count);
                       for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * (prob[i] - t[i]);
                     });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || static_cast<std::size_t>(z.dim(0)) != labels.size()) {
    throw ShapeError("cross_entropy: expected N x K logits and N labels");
  }
  const int n = z.dim(0), k = z.dim(1);
  Tensor t({n, k, 1, 1});
  for (int b = 0; b < n; ++b) {
    if (labels[b] < 0 || labels[b] >= k) throw InvalidLabel("cross_entropy: label out of range");
    t[static_cast<std::size_t>(b) * k + labels[b]] = 1.0f;
  }
  return pixel_cross_entropy(ops::reshape(logits, {n, k, 1, 1}), t);
}

namespace {

template <class Step>
double run_epochs(Module& model, const PairProvider& data, const ProbeTrainConfig& cfg, const char* what,
                  std::ostream* progress, Step step) {
  if (data.count == 0) throw EmptyDatasetError(std::string(what) + ": no training pairs");
  init_weights(model, cfg.init_std, cfg.seed);
  Adam opt(model.parameters(), {cfg.learning_rate, 0.9f, 0.999f, 1e-8f});
  double last = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.count, cfg.seed, epoch);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<ScenePair> pairs;
      for (std::size_t k = s; k < std::min(order.size(), s + cfg.batch_size); ++k) pairs.push_back(data.load(order[k]));
      opt.zero_grad();
      Var loss = step(pairs);
      if (!std::isfinite(loss.value()[0])) throw NumericalError(std::string(what) + ": non-finite loss");
      backward(loss);
      opt.step();
      sum += loss.value()[0];
      ++batches;
    }
    last = sum / batches;
    if (progress) *progress << what << " epoch " << epoch + 1 << " loss " << last << '\n';
  }
  opt.zero_grad();
  return last;
}

}  // namespace

double train_segmenter(Segmenter& segmenter, const PairProvider& data, const ProbeTrainConfig& cfg,
                       std::ostream* progress) {
  const double loss = run_epochs(segmenter, data, cfg, "seg", progress, [&](const std::vector<ScenePair>& pairs) {
    const Batch b = make_batch(pairs);
    if (!b.mask) throw InvalidInput("segmenter training requires ground-truth masks for every pair");
    return pixel_cross_entropy(segmenter.logits(Var::leaf(b.ground)), *b.mask);
  });
  segmenter.freeze();
  return loss;
}

double train_classifier(Classifier& classifier, const PairProvider& data, const ProbeTrainConfig& cfg,
                        std::ostream* progress) {
  const double loss = run_epochs(classifier, data, cfg, "cls", progress, [&](const std::vector<ScenePair>& pairs) {
    std::vector<int> labels;
    for (const auto& p : pairs) {
      if (p.scene_label < 0 || p.scene_label >= classifier.config().num_categories) {
        throw InvalidLabel("classifier training requires a scene label in range for every pair: " + p.id);
      }
      labels.push_back(p.scene_label);
    }
    return cross_entropy(classifier.logits(Var::leaf(make_batch(pairs).ground)), labels);
  });
  classifier.freeze();
  return loss;
}

namespace {

constexpr const char* kProbeFile = "probe.json";

void write_probe_json(const fs::path& dir, const nlohmann::json& j) {
  std::ofstream os(dir / kProbeFile);
  if (!os) throw IoError("cannot write " + (dir / kProbeFile).string());
  os << j.dump(2) << '\n';
}

nlohmann::json read_probe_json(const fs::path& dir, const char* kind) {
  std::ifstream is(dir / kProbeFile);
  if (!is) throw ConfigurationError(std::string(kind) + " checkpoint missing: " + (dir / kProbeFile).string());
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded() || j.value("kind", "") != kind) {
    throw ConfigurationError("not a " + std::string(kind) + " checkpoint: " + dir.string());
  }
  return j;
}

}  // namespace

void save_segmenter(const fs::path& dir, const Segmenter& segmenter) {
  TensorArchive archive;
  save_module(archive, segmenter, "");
  archive.save(dir);
  const SegmenterConfig& c = segmenter.config();
  write_probe_json(dir, {{"kind", "segmenter"}, {"arch", to_string(c.arch)}, {"channels", c.channels},
                         {"num_classes", c.num_classes}});
}

std::unique_ptr<Segmenter> load_segmenter(const fs::path& dir) {
  const nlohmann::json j = read_probe_json(dir, "segmenter");
  SegmenterConfig c;
  c.arch = parse_segmenter_arch(j.value("arch", "segnet"));
  c.channels = j.value("channels", c.channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  auto seg = std::make_unique<Segmenter>(c);
  load_module(TensorArchive::load(dir), *seg, "");
  seg->freeze();
  return seg;
}

void save_classifier(const fs::path& dir, const Classifier& classifier) {
  TensorArchive archive;
  save_module(archive, classifier, "");
  archive.save(dir);
  const ClassifierConfig& c = classifier.config();
  write_probe_json(dir, {{"kind", "classifier"}, {"channels", c.channels}, {"num_categories", c.num_categories}});
}

std::unique_ptr<Classifier> load_classifier(const fs::path& dir) {
  const nlohmann::json j = read_probe_json(dir, "classifier");
  ClassifierConfig c;
  c.channels = j.value("channels", c.channels);
  c.num_categories = j.value("num_categories", c.num_categories);
  auto cls = std::make_unique<Classifier>(c);
  load_module(TensorArchive::load(dir), *cls, "");
  cls->freeze();
  return cls;
}

}  // namespace xview
