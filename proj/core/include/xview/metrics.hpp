#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xview/networks.hpp"
#include "xview/tensor.hpp"
#include "xview/training.hpp"

namespace xview {

inline constexpr double kMetricCapDb = 100.0;

/// 10 log10(1 / MSE) for images in [0, 1]; kMetricCapDb when MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b);

/// Mean SSIM over channels and valid window positions; 11x11 Gaussian (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2. Inputs are C x H x W (or H x W) in [0, 1].
double ssim(const Tensor& a, const Tensor& b);

/// 10 log10(1 / mean |G(a) - G(b)|) with G(x) = |dx| + |dy| from forward differences
/// over the (H-1) x (W-1) interior; kMetricCapDb when the mean is below 1e-10.
double sharpness_difference(const Tensor& a, const Tensor& b);

/// Row-normalized N x K probability table.
using ProbTable = std::vector<std::vector<double>>;

/// Keep the k largest entries of each row and renormalize; k <= 0 keeps everything.
ProbTable truncate_top_k(const ProbTable& probs, int k);

/// exp(mean KL(p(y|x) || p(y))) averaged over `splits` equal partitions; top_k <= 0 means all.
double inception_score(const ProbTable& probs, int splits = 1, int top_k = 0);

/// Percentage of fakes whose top-k predictions contain the argmax label of the matching real image.
double topk_accuracy(const ProbTable& fake, const ProbTable& real, int k);

inline constexpr double kKlEps = 1e-12;

/// Per pair KL(p_fake || p_real) with eps floors inside the log; (mean, population std).
std::pair<double, double> kl_divergence_metric(const ProbTable& fake, const ProbTable& real);

/// Confusion accumulation over a whole set; IoU per class = TP / (TP + FP + FN).
class MiouAccumulator {
 public:
  explicit MiouAccumulator(int num_classes = 4);

  void add(const std::vector<int>& pred, const std::vector<int>& truth);
  /// Mean over classes present in prediction or target; 0 when nothing was added.
  double value() const;
  std::vector<std::optional<double>> per_class() const;

 private:
  int classes_;
  std::vector<std::uint64_t> tp_, fp_, fn_;
};

double miou(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth,
            int num_classes = 4);

/// Metrics absent from a run (missing probe) stay empty.
struct EvalReport {
  std::size_t count = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double sd = 0.0;
  std::optional<double> is_all, is_top1, is_top5;
  std::optional<double> top1_acc, top5_acc;
  std::optional<double> kl_mean, kl_std;
  std::optional<double> miou;

  std::map<std::string, double> values() const;
  std::string table() const;
  std::string key_values() const;
  static EvalReport parse_key_values(const std::string& text);
};

struct EvalOptions {
  int is_splits = 1;
};

/// `fake_for` maps a pair to its 3 x H x W synthesized image in [-1, 1].
/// Probes may be null; dependent metrics are then skipped.
EvalReport evaluate(const PairProvider& data, const std::function<Tensor(const ScenePair&)>& fake_for,
                    const Segmenter* segmenter, const Classifier* classifier, const EvalOptions& options = {});

}  // namespace xview
