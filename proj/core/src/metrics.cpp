#include "xview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "xview/autograd.hpp"
#include "xview/error.hpp"
#include "xview/losses.hpp"

namespace xview {

namespace {

double cap_db(double mean_error) {
  if (mean_error < 1e-10) return kMetricCapDb;
  return std::min(kMetricCapDb, 10.0 * std::log10(1.0 / mean_error));
}

// Channels, height, width of a C x H x W or H x W image.
std::array<int, 3> image_dims(const Tensor& t, const char* what) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw ShapeError(std::string(what) + ": expected C x H x W or H x W image, got " + shape_str(t.shape()));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  if (a.numel() == 0) throw InvalidInput("psnr: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return cap_db(acc / static_cast<double>(a.numel()));
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double s = 0.0;
  for (int k = 0; k < kWin; ++k) {
    const double d = k - kWin / 2;
    g[k] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += g[k];
  }
  for (double& v : g) v /= s;
  return g;
}

// Valid separable Gaussian filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w, const std::array<double, kWin>& g) {
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * x[static_cast<std::size_t>(i) * w + j + k];
      tmp[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * tmp[static_cast<std::size_t>(i + k) * ow + j];
      out[static_cast<std::size_t>(i) * ow + j] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  const auto [c, h, w] = image_dims(a, "ssim");
  if (h < kWin || w < kWin) throw InvalidInput("ssim: image " + shape_str(a.shape()) + " smaller than 11x11 window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < c; ++ch) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t p = 0; p < plane; ++p) {
      x[p] = a[ch * plane + p];
      y[p] = b[ch * plane + p];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = sxx[p] - mx[p] * mx[p];
      const double vy = syy[p] - my[p] * my[p];
      const double cov = sxy[p] - mx[p] * my[p];
      total += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2)) /
               ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
    }
    count += mx.size();
  }
  return total / static_cast<double>(count);
}

double sharpness_difference(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sharpness_difference");
  const auto [c, h, w] = image_dims(a, "sharpness_difference");
  if (h < 2 || w < 2) throw InvalidInput("sharpness_difference: image must be at least 2x2");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto grad = [&](const Tensor& t, int ch, int i, int j) {
    const float* p = t.data() + ch * plane;
    const double v = p[static_cast<std::size_t>(i) * w + j];
    return std::abs(p[static_cast<std::size_t>(i + 1) * w + j] - v) + std::abs(p[static_cast<std::size_t>(i) * w + j + 1] - v);
  };
  double acc = 0.0;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h - 1; ++i)
      for (int j = 0; j < w - 1; ++j) acc += std::abs(grad(a, ch, i, j) - grad(b, ch, i, j));
  return cap_db(acc / (static_cast<double>(c) * (h - 1) * (w - 1)));
}

namespace {

void require_table(const ProbTable& p, const char* what) {
  if (p.empty()) throw InvalidArgument(std::string(what) + ": empty probability table");
  const std::size_t k = p.front().size();
  if (k == 0) throw InvalidArgument(std::string(what) + ": zero categories");
  for (const auto& row : p) {
    if (row.size() != k) throw ShapeError(std::string(what) + ": ragged probability table");
  }
}

std::vector<std::size_t> ranking(const std::vector<double>& row) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return idx;
}

}  // namespace

ProbTable truncate_top_k(const ProbTable& probs, int k) {
  if (k <= 0) return probs;
  ProbTable out;
  out.reserve(probs.size());
  for (const auto& row : probs) {
    const auto idx = ranking(row);
    std::vector<double> t(row.size(), 0.0);
    double s = 0.0;
    for (std::size_t r = 0; r < std::min<std::size_t>(static_cast<std::size_t>(k), row.size()); ++r) {
      t[idx[r]] = row[idx[r]];
      s += row[idx[r]];
    }
    if (s > 0.0) {
      for (double& v : t) v /= s;
    }
    out.push_back(std::move(t));
  }
  return out;
}

double inception_score(const ProbTable& probs_in, int splits, int top_k) {
  require_table(probs_in, "inception_score");
  if (splits < 1) throw InvalidArgument("inception_score: splits must be >= 1");
  if (probs_in.size() < static_cast<std::size_t>(splits)) {
    throw InvalidArgument("inception_score: fewer images than splits");
  }
  const ProbTable probs = truncate_top_k(probs_in, top_k);
  const std::size_t n = probs.size(), k = probs.front().size();
  double score = 0.0;
  for (int s = 0; s < splits; ++s) {
    const std::size_t lo = n * s / splits, hi = n * (s + 1) / splits;
    std::vector<double> marginal(k, 0.0);
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < k; ++j) marginal[j] += probs[i][j];
    for (double& v : marginal) v /= static_cast<double>(hi - lo);
    double kl = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double p = probs[i][j];
        if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[j]));
      }
    score += std::exp(kl / static_cast<double>(hi - lo));
  }
  return score / splits;
}

double topk_accuracy(const ProbTable& fake, const ProbTable& real, int k) {
  require_table(fake, "topk_accuracy");
  require_table(real, "topk_accuracy");
  if (fake.size() != real.size() || fake.front().size() != real.front().size()) {
    throw ShapeError("topk_accuracy: fake and real tables differ in shape");
  }
  if (k < 1) throw InvalidArgument("topk_accuracy: k must be >= 1");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    const std::size_t label = ranking(real[i])[0];
    const auto order = ranking(fake[i]);
    const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    if (std::find(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), label) !=
        order.begin() + static_cast<std::ptrdiff_t>(depth)) {
      ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(fake.size());
}

std::pair<double, double> kl_divergence_metric(const ProbTable& fake, const ProbTable& real) {
  require_table(fake, "kl_divergence_metric");
  require_table(real, "kl_divergence_metric");
  if (fake.size() != real.size() || fake.front().size() != real.front().size()) {
    throw ShapeError("kl_divergence_metric: fake and real tables differ in shape");
  }
  std::vector<double> kl(fake.size(), 0.0);
  for (std::size_t i = 0; i < fake.size(); ++i)
    for (std::size_t j = 0; j < fake[i].size(); ++j) {
      const double p = fake[i][j];
      if (p > 0.0) kl[i] += p * std::log(std::max(p, kKlEps) / std::max(real[i][j], kKlEps));
    }
  const double n = static_cast<double>(kl.size());
  double mean = 0.0;
  for (double v : kl) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : kl) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

MiouAccumulator::MiouAccumulator(int num_classes)
    : classes_(num_classes), tp_(num_classes, 0), fp_(num_classes, 0), fn_(num_classes, 0) {
  if (num_classes < 1) throw InvalidArgument("miou: num_classes must be >= 1");
}

void MiouAccumulator::add(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("miou: prediction and target sizes differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    if (p < 0 || p >= classes_ || t < 0 || t >= classes_) {
      throw InvalidLabel("miou: label outside [0, " + std::to_string(classes_) + ")");
    }
    if (p == t) {
      ++tp_[p];
    } else {
      ++fp_[p];
      ++fn_[t];
    }
  }
}

std::vector<std::optional<double>> MiouAccumulator::per_class() const {
  std::vector<std::optional<double>> out(classes_);
  for (int k = 0; k < classes_; ++k) {
    const std::uint64_t denom = tp_[k] + fp_[k] + fn_[k];
    if (denom > 0) out[k] = static_cast<double>(tp_[k]) / static_cast<double>(denom);
  }
  return out;
}

double MiouAccumulator::value() const {
  double sum = 0.0;
  int present = 0;
  for (const auto& v : per_class()) {
    if (v) {
      sum += *v;
      ++present;
    }
  }
  return present ? sum / present : 0.0;
}

double miou(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth, int num_classes) {
  if (pred.size() != truth.size()) throw ShapeError("miou: prediction and target counts differ");
  MiouAccumulator acc(num_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) acc.add(pred[i], truth[i]);
  return acc.value();
}

std::map<std::string, double> EvalReport::values() const {
  std::map<std::string, double> v{{"count", static_cast<double>(count)}, {"psnr", psnr}, {"ssim", ssim}, {"sd", sd}};
  auto opt = [&](const char* key, const std::optional<double>& x) {
    if (x) v[key] = *x;
  };
  opt("is_all", is_all);
  opt("is_top1", is_top1);
  opt("is_top5", is_top5);
  opt("top1_acc", top1_acc);
  opt("top5_acc", top5_acc);
  opt("kl_mean", kl_mean);
  opt("kl_std", kl_std);
  opt("miou", miou);
  return v;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto row = [&](const char* name, const std::optional<double>& x) {
    os << std::left << std::setw(12) << name << ' ';
    if (x) {
      os << *x;
    } else {
      os << "n/a";
    }
    os << '\n';
  };
  os << std::left << std::setw(12) << "pairs" << ' ' << count << '\n';
  row("PSNR", psnr);
  row("SSIM", ssim);
  row("SD", sd);
  row("IS all", is_all);
  row("IS top-1", is_top1);
  row("IS top-5", is_top5);
  row("Acc top-1", top1_acc);
  row("Acc top-5", top5_acc);
  os << std::left << std::setw(12) << "KL" << ' ';
  if (kl_mean && kl_std) {
    os << *kl_mean << " +- " << *kl_std << '\n';
  } else {
    os << "n/a\n";
  }
  row("mIoU", miou);
  return os.str();
}

std::string EvalReport::key_values() const {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& [k, v] : values()) os << k << '=' << v << '\n';
  return os.str();
}

EvalReport EvalReport::parse_key_values(const std::string& text) {
  EvalReport r;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("eval report: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    double v = 0.0;
    try {
      v = std::stod(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw InvalidInput("eval report: bad number in line '" + line + "'");
    }
    if (key == "count") r.count = static_cast<std::size_t>(v);
    else if (key == "psnr") r.psnr = v;
    else if (key == "ssim") r.ssim = v;
    else if (key == "sd") r.sd = v;
    else if (key == "is_all") r.is_all = v;
    else if (key == "is_top1") r.is_top1 = v;
    else if (key == "is_top5") r.is_top5 = v;
    else if (key == "top1_acc") r.top1_acc = v;
    else if (key == "top5_acc") r.top5_acc = v;
    else if (key == "kl_mean") r.kl_mean = v;
    else if (key == "kl_std") r.kl_std = v;
    else if (key == "miou") r.miou = v;
    else throw InvalidInput("eval report: unknown key '" + key + "'");
  }
  return r;
}

namespace {

Tensor to_unit(const Tensor& signed_image) {
  Tensor t = signed_image;
  for (float& v : t.values()) v = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
  return t;
}

std::vector<double> class_probs(const Classifier& cls, const Tensor& image) {
  const Tensor p = cls.probabilities(Var::leaf(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}))).value();
  return {p.values().begin(), p.values().end()};
}

std::vector<int> seg_labels(const Segmenter& seg, const Tensor& image) {
  return mask_labels(seg.segment(Var::leaf(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}))).value());
}

}  // namespace

EvalReport evaluate(const PairProvider& data, const std::function<Tensor(const ScenePair&)>& fake_for,
                    const Segmenter* segmenter, const Classifier* classifier, const EvalOptions& options) {
  if (data.count == 0) throw EmptyDatasetError("evaluate: no test pairs");
  NoGradGuard guard;
  EvalReport r;
  r.count = data.count;
  ProbTable fake_p, real_p;
  std::optional<MiouAccumulator> acc;
  if (segmenter) acc.emplace(segmenter->config().num_classes);
  for (std::size_t i = 0; i < data.count; ++i) {
    const ScenePair pair = data.load(i);
    const Tensor fake = fake_for(pair);
    require_same_shape(fake, pair.ground, "evaluate fake image");
    const Tensor a = to_unit(pair.ground), b = to_unit(fake);
    r.psnr += psnr(a, b);
    r.ssim += ssim(a, b);
    r.sd += sharpness_difference(a, b);
    if (classifier) {
      fake_p.push_back(class_probs(*classifier, fake));
      real_p.push_back(class_probs(*classifier, pair.ground));
    }
    if (acc) acc->add(seg_labels(*segmenter, fake), seg_labels(*segmenter, pair.ground));
  }
  const double n = static_cast<double>(data.count);
  r.psnr /= n;
  r.ssim /= n;
  r.sd /= n;
  if (classifier) {
    const int splits = std::min<int>(options.is_splits, static_cast<int>(data.count));
    r.is_all = inception_score(fake_p, splits, 0);
    r.is_top1 = inception_score(fake_p, splits, 1);
    r.is_top5 = inception_score(fake_p, splits, 5);
    r.top1_acc = topk_accuracy(fake_p, real_p, 1);
    r.top5_acc = topk_accuracy(fake_p, real_p, 5);
    const auto [m, s] = kl_divergence_metric(fake_p, real_p);
    r.kl_mean = m;
    r.kl_std = s;
  }
  if (acc) r.miou = acc->value();
  return r;
}

}  // namespace xview
