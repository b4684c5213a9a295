#include "xview/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "xview/autograd.hpp"
#include "xview/error.hpp"
#include "xview/geometry.hpp"
#include "xview/image_io.hpp"

namespace xview {

namespace fs = std::filesystem;

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw InvalidArgument("unknown split '" + name + "' (expected train or test)");
}

namespace {

bool is_raster(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, fs::path> list_rasters(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_raster(entry.path())) out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, Split split) {
  DatasetManifest m;
  m.root_path = root / to_string(split);
  m.split = split;
  m.class_names.assign(kClassNames.begin(), kClassNames.end());
  const fs::path aerial_dir = m.root_path / "aerial";
  const fs::path ground_dir = m.root_path / "ground";
  const fs::path mask_dir = m.root_path / "mask";
  for (const auto& dir : {aerial_dir, ground_dir}) {
    if (!fs::is_directory(dir)) throw DatasetLayoutError("missing dataset directory " + dir.string());
  }
  const auto aerial = list_rasters(aerial_dir);
  const auto ground = list_rasters(ground_dir);
  std::map<std::string, fs::path> masks;
  if (fs::is_directory(mask_dir)) masks = list_rasters(mask_dir);

  std::map<std::string, int> labels;
  const fs::path meta = m.root_path / "dataset.json";
  if (fs::exists(meta)) {
    std::ifstream is(meta);
    const nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw DatasetLayoutError("malformed " + meta.string());
    m.prepared = j.value("prepared", false);
    if (j.contains("scene_labels")) {
      for (const auto& [k, v] : j["scene_labels"].items()) labels[k] = v.get<int>();
    }
  }

  for (const auto& [stem, path] : aerial) {  // std::map iterates in lexicographic order
    auto g = ground.find(stem);
    if (g == ground.end()) continue;
    m.stems.push_back(stem);
    m.aerial_files.push_back(path);
    m.ground_files.push_back(g->second);
    auto mk = masks.find(stem);
    m.mask_files.push_back(mk == masks.end() ? std::nullopt : std::optional<fs::path>(mk->second));
    auto lb = labels.find(stem);
    m.scene_labels.push_back(lb == labels.end() ? -1 : lb->second);
  }
  m.pair_count = m.stems.size();
  if (m.pair_count == 0) throw EmptyDatasetError("no matching aerial/ground stems under " + m.root_path.string());
  return m;
}

namespace {

struct AxisWeights {
  std::vector<int> first;
  std::vector<std::vector<float>> weights;
};

AxisWeights triangle_weights(int n_in, int n_out) {
  AxisWeights aw;
  const double scale = static_cast<double>(n_in) / n_out;
  const double support = std::max(scale, 1.0);
  for (int i = 0; i < n_out; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support)));
    const int hi = std::min(n_in - 1, static_cast<int>(std::ceil(center + support)));
    std::vector<double> w;
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double t = 1.0 - std::abs((j + 0.5 - center) / support);
      w.push_back(std::max(0.0, t));
      total += w.back();
    }
    std::vector<float> wf(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) wf[k] = static_cast<float>(w[k] / total);
    aw.first.push_back(lo);
    aw.weights.push_back(std::move(wf));
  }
  return aw;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, int height, int width) {
  if (image.rank() != 3) throw ShapeError("resize_bilinear: expected C x H x W");
  if (height < 1 || width < 1) throw InvalidArgument("resize_bilinear: target size must be positive");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image;
  const AxisWeights wx = triangle_weights(w, width);
  const AxisWeights wy = triangle_weights(h, height);
  Tensor tmp({c, h, width});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y) {
      const float* src = image.data() + (static_cast<std::size_t>(k) * h + y) * w;
      float* dst = tmp.data() + (static_cast<std::size_t>(k) * h + y) * width;
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        const auto& ws = wx.weights[x];
        for (std::size_t t = 0; t < ws.size(); ++t) acc += ws[t] * src[wx.first[x] + static_cast<int>(t)];
        dst[x] = static_cast<float>(acc);
      }
    }
  Tensor out({c, height, width});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < height; ++y) {
      const auto& ws = wy.weights[y];
      float* dst = out.data() + (static_cast<std::size_t>(k) * height + y) * width;
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < ws.size(); ++t) {
          acc += ws[t] * tmp[(static_cast<std::size_t>(k) * h + wy.first[y] + static_cast<int>(t)) * width + x];
        }
        dst[x] = static_cast<float>(acc);
      }
    }
  return out;
}

std::vector<int> resize_labels(const std::vector<int>& labels, int src_h, int src_w, int height, int width) {
  if (labels.size() != static_cast<std::size_t>(src_h) * src_w) throw ShapeError("resize_labels: size mismatch");
  std::vector<int> out(static_cast<std::size_t>(height) * width);
  for (int i = 0; i < height; ++i) {
    const int si = std::min(src_h - 1, static_cast<int>((i + 0.5) * src_h / height));
    for (int j = 0; j < width; ++j) {
      const int sj = std::min(src_w - 1, static_cast<int>((j + 0.5) * src_w / width));
      out[static_cast<std::size_t>(i) * width + j] = labels[static_cast<std::size_t>(si) * src_w + sj];
    }
  }
  return out;
}

Tensor one_hot(const std::vector<int>& labels, int height, int width, int classes) {
  if (labels.size() != static_cast<std::size_t>(height) * width) throw ShapeError("one_hot: size mismatch");
  Tensor t({classes, height, width});
  const std::size_t plane = labels.size();
  for (std::size_t p = 0; p < plane; ++p) {
    const int l = labels[p];
    if (l < 0 || l >= classes) throw InvalidLabel("label " + std::to_string(l) + " outside [0, " +
                                                  std::to_string(classes) + ")");
    t[static_cast<std::size_t>(l) * plane + p] = 1.0f;
  }
  return t;
}

namespace {

Tensor crop(const Tensor& image, int top, int left, int height, int width) {
  const int c = image.dim(0), w = image.dim(2);
  Tensor out({c, height, width});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < height; ++y) {
      const float* src = image.data() + (static_cast<std::size_t>(k) * image.dim(1) + top + y) * w + left;
      std::copy_n(src, width, out.data() + (static_cast<std::size_t>(k) * height + y) * width);
    }
  return out;
}

void require_raw(const Tensor& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) != 3) throw InvalidInput(std::string(what) + ": expected 3 x H x W raster");
  if (t.dim(1) < 8 || t.dim(2) < 8) throw InvalidInput(std::string(what) + ": raster smaller than 8x8");
}

Tensor to_signed(Tensor t) {
  for (float& v : t.values()) v = v * 2.0f - 1.0f;
  return t;
}

// Central vertical band [H/4, H - H/4) of a panorama.
std::pair<int, int> ground_band(int h) {
  const int top = h / 4;
  return {top, h - 2 * top};
}

}  // namespace

Tensor preprocess_aerial(const Tensor& raw_aerial, int size) {
  require_raw(raw_aerial, "preprocess aerial");
  const int ah = raw_aerial.dim(1), aw = raw_aerial.dim(2);
  const int side = std::min(ah, aw);
  Tensor square = crop(raw_aerial, (ah - side) / 2, (aw - side) / 2, side, side);
  return to_signed(resize_bilinear(square, size, size));
}

ScenePair preprocess_pair(const Tensor& raw_aerial, const Tensor& raw_ground, const ImageSizes& sizes) {
  require_raw(raw_ground, "preprocess ground");
  ScenePair pair;
  pair.aerial = preprocess_aerial(raw_aerial, sizes.aerial_size);
  const auto [top, band] = ground_band(raw_ground.dim(1));
  Tensor g = crop(raw_ground, top, 0, band, raw_ground.dim(2));
  pair.ground = to_signed(resize_bilinear(g, sizes.ground_height, sizes.ground_width));
  return pair;
}

Tensor preprocess_mask(const std::vector<int>& raw_labels, int raw_h, int raw_w, const ImageSizes& sizes) {
  if (raw_labels.size() != static_cast<std::size_t>(raw_h) * raw_w) throw ShapeError("preprocess_mask: size mismatch");
  const auto [top, band] = ground_band(raw_h);
  std::vector<int> cropped(raw_labels.begin() + static_cast<std::ptrdiff_t>(top) * raw_w,
                           raw_labels.begin() + static_cast<std::ptrdiff_t>(top + band) * raw_w);
  return one_hot(resize_labels(cropped, band, raw_w, sizes.ground_height, sizes.ground_width), sizes.ground_height,
                 sizes.ground_width, static_cast<int>(kClassNames.size()));
}

ScenePair load_pair(const DatasetManifest& manifest, std::size_t index, const ImageSizes& sizes) {
  if (index >= manifest.pair_count) throw InvalidArgument("load_pair: index out of range");
  const Tensor raw_aerial = to_unit_tensor(read_rgb8(manifest.aerial_files[index]));
  const Tensor raw_ground = to_unit_tensor(read_rgb8(manifest.ground_files[index]));
  ScenePair pair;
  std::vector<int> labels;
  int lh = 0, lw = 0;
  if (manifest.mask_files[index]) {
    const Image8 lab = read_labels8(*manifest.mask_files[index]);
    if (lab.channels != 1) throw InvalidInput("mask must be single-channel: " + manifest.mask_files[index]->string());
    labels.assign(lab.pixels.begin(), lab.pixels.end());
    lh = lab.height;
    lw = lab.width;
  }
  if (manifest.prepared) {
    if (raw_aerial.shape() != Shape{3, sizes.aerial_size, sizes.aerial_size} ||
        raw_ground.shape() != Shape{3, sizes.ground_height, sizes.ground_width}) {
      throw InvalidInput("prepared dataset raster sizes do not match the configured sizes: " +
                         manifest.stems[index]);
    }
    pair.aerial = to_signed(raw_aerial);
    pair.ground = to_signed(raw_ground);
    if (!labels.empty()) {
      if (lh != sizes.ground_height || lw != sizes.ground_width) {
        throw InvalidInput("prepared mask size mismatch: " + manifest.stems[index]);
      }
      pair.ground_mask = one_hot(labels, lh, lw, static_cast<int>(kClassNames.size()));
    }
  } else {
    pair = preprocess_pair(raw_aerial, raw_ground, sizes);
    if (!labels.empty()) {
      if (lh != raw_ground.dim(1) || lw != raw_ground.dim(2)) {
        throw InvalidInput("mask size differs from its ground image: " + manifest.stems[index]);
      }
      pair.ground_mask = preprocess_mask(labels, lh, lw, sizes);
    }
  }
  pair.id = manifest.stems[index];
  pair.scene_label = manifest.scene_labels[index];
  return pair;
}

std::uint64_t synthetic_pair_seed(std::uint64_t base_seed, std::size_t index) {
  // splitmix64 of the combined value
  std::uint64_t z = base_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

struct SceneLayout {
  double road_radius;   // fraction of S/2
  double sky_radius;
  double phase;         // sector start angle
  int sectors;
  std::vector<int> sector_class;  // man-made (1) or vegetation (3)
  std::array<std::array<double, 3>, 4> base;
  double texture_phase;  // phase of the low-frequency vegetation shading
  int label;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  // Avoid distribution classes so the stream is identical across standard libraries.
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + (hi - lo) * u;
}

SceneLayout make_layout(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneLayout L;
  const int man_made = static_cast<int>(rng() % 4);
  const int wide_road = static_cast<int>(rng() % 2);
  L.label = man_made * 2 + wide_road;
  L.road_radius = wide_road ? uniform(rng, 0.32, 0.40) : uniform(rng, 0.16, 0.24);
  L.sky_radius = uniform(rng, 0.62, 0.74);
  L.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  L.sectors = 6;
  L.sector_class.assign(L.sectors, 3);
  std::vector<int> idx(L.sectors);
  for (int i = 0; i < L.sectors; ++i) idx[i] = i;
  for (int i = L.sectors - 1; i > 0; --i) std::swap(idx[i], idx[rng() % static_cast<std::uint64_t>(i + 1)]);
  for (int i = 0; i < man_made; ++i) L.sector_class[idx[i]] = 1;
  const std::array<std::array<double, 3>, 4> palette{{{0.45, 0.65, 0.95},    // sky
                                                      {0.80, 0.45, 0.30},    // man-made
                                                      {0.30, 0.30, 0.34},    // road
                                                      {0.22, 0.58, 0.22}}};  // vegetation
  for (int k = 0; k < 4; ++k)
    for (int ch = 0; ch < 3; ++ch) L.base[k][ch] = std::clamp(palette[k][ch] + uniform(rng, -0.06, 0.06), 0.0, 1.0);
  L.texture_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return L;
}

struct PolarPoint {
  double rho;    // radius / (S/2)
  double theta;  // [0, 2 pi), clockwise from north
};

PolarPoint to_polar(double x, double y, double half) {
  const double dx = x - half;
  const double dy = half - y;
  double theta = std::atan2(dx, dy);
  if (theta < 0) theta += 2.0 * std::numbers::pi;
  return {std::hypot(dx, dy) / half, theta};
}

int class_at(const SceneLayout& L, const PolarPoint& p) {
  if (p.rho < L.road_radius) return 2;
  if (p.rho >= L.sky_radius) return 0;
  double a = p.theta - L.phase;
  a -= 2.0 * std::numbers::pi * std::floor(a / (2.0 * std::numbers::pi));
  const int sector = std::min(L.sectors - 1, static_cast<int>(a / (2.0 * std::numbers::pi) * L.sectors));
  return L.sector_class[sector];
}

std::array<double, 3> color_at(const SceneLayout& L, const PolarPoint& p) {
  const int k = class_at(L, p);
  std::array<double, 3> c = L.base[k];
  double shade = 0.0;
  switch (k) {
    case 0: shade = 0.15 * (std::min(p.rho, 1.2) - L.sky_radius); break;
    case 1: shade = 0.10 * (p.rho - 0.5 * (L.road_radius + L.sky_radius)); break;
    case 2: shade = 0.0; break;
    default: shade = 0.05 * std::cos(2.0 * p.theta + L.texture_phase); break;
  }
  for (double& v : c) v = std::clamp(v + shade, 0.0, 1.0);
  return c;
}

}  // namespace

ScenePair generate_synthetic_pair(std::uint64_t seed, const ImageSizes& sizes) {
  const SceneLayout L = make_layout(seed);
  const int s = sizes.aerial_size;
  const double half = s / 2.0;
  ScenePair pair;
  pair.id = "synthetic_" + std::to_string(seed);
  pair.scene_label = L.label;

  pair.aerial = Tensor({3, s, s});
  const std::size_t aplane = static_cast<std::size_t>(s) * s;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const auto c = color_at(L, to_polar(x, y, half));
      for (int ch = 0; ch < 3; ++ch) {
        pair.aerial[ch * aplane + static_cast<std::size_t>(y) * s + x] = static_cast<float>(c[ch] * 2.0 - 1.0);
      }
    }

  const PolarGrid grid = build_polar_grid(s, sizes.ground_height, sizes.ground_width);
  {
    NoGradGuard guard;
    Var a = Var::leaf(pair.aerial.reshaped({1, 3, s, s}));
    pair.ground = bilinear_sample(a, grid).value().reshaped({3, sizes.ground_height, sizes.ground_width});
  }

  const std::size_t gplane = static_cast<std::size_t>(sizes.ground_height) * sizes.ground_width;
  std::vector<int> labels(gplane);
  for (std::size_t p = 0; p < gplane; ++p) {
    labels[p] = class_at(L, to_polar(grid.coords[p], grid.coords[gplane + p], half));
  }
  pair.ground_mask = one_hot(labels, sizes.ground_height, sizes.ground_width, static_cast<int>(kClassNames.size()));
  return pair;
}

std::vector<ScenePair> generate_synthetic_set(std::size_t count, std::uint64_t base_seed, const ImageSizes& sizes) {
  std::vector<ScenePair> pairs;
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    pairs.push_back(generate_synthetic_pair(synthetic_pair_seed(base_seed, i), sizes));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu", i);
    pairs.back().id = buf;
  }
  return pairs;
}

void write_dataset(const fs::path& root, Split split, const std::vector<ScenePair>& pairs) {
  const fs::path base = root / to_string(split);
  std::error_code ec;
  for (const char* sub : {"aerial", "ground", "mask"}) {
    fs::create_directories(base / sub, ec);
    if (ec) throw IoError("cannot create " + (base / sub).string() + ": " + ec.message());
  }
  nlohmann::json meta;
  meta["prepared"] = true;
  meta["class_names"] = kClassNames;
  nlohmann::json labels = nlohmann::json::object();
  for (const ScenePair& p : pairs) {
    write_png(base / "aerial" / (p.id + ".png"), from_signed_tensor(p.aerial));
    write_png(base / "ground" / (p.id + ".png"), from_signed_tensor(p.ground));
    if (p.ground_mask) {
      const Tensor& m = *p.ground_mask;
      Image8 lab{m.dim(2), m.dim(1), 1, {}};
      const std::size_t plane = static_cast<std::size_t>(lab.width) * lab.height;
      lab.pixels.resize(plane);
      for (std::size_t q = 0; q < plane; ++q) {
        int best = 0;
        for (int k = 1; k < m.dim(0); ++k)
          if (m[k * plane + q] > m[best * plane + q]) best = k;
        lab.pixels[q] = static_cast<std::uint8_t>(best);
      }
      write_label_png(base / "mask" / (p.id + ".png"), lab);
    }
    if (p.scene_label >= 0) labels[p.id] = p.scene_label;
  }
  meta["scene_labels"] = labels;
  std::ofstream os(base / "dataset.json");
  if (!os) throw IoError("cannot write " + (base / "dataset.json").string());
  os << meta.dump(2) << '\n';
}

}  // namespace xview
