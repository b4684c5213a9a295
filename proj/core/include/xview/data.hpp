#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xview/tensor.hpp"

namespace xview {

/// Fixed semantic class order used by masks, losses and metrics.
inline const std::array<std::string, 4> kClassNames{"sky", "man-made", "road", "vegetation"};

enum class Split { Train, Test };
std::string to_string(Split split);
Split parse_split(const std::string& name);

/// Target raster sizes after preprocessing.
struct ImageSizes {
  int aerial_size = 256;
  int ground_height = 128;
  int ground_width = 512;
};

struct ScenePair {
  Tensor aerial;                     // 3 x S x S in [-1, 1]
  Tensor ground;                     // 3 x H x W in [-1, 1]
  std::optional<Tensor> ground_mask; // 4 x H x W one-hot
  std::string id;
  int scene_label = -1;              // synthetic layout category, -1 if unknown
};

struct DatasetManifest {
  std::filesystem::path root_path;  // <root>/<split>
  Split split = Split::Train;
  std::size_t pair_count = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> stems;       // sorted
  std::vector<std::filesystem::path> aerial_files;
  std::vector<std::filesystem::path> ground_files;
  std::vector<std::optional<std::filesystem::path>> mask_files;
  std::vector<int> scene_labels;        // -1 when unknown
  bool prepared = false;                // rasters already at target size; skip cropping
};

/// Scan `<root>/<split>/{aerial,ground,mask}`. Stems present in both aerial/
/// and ground/ are kept, in lexicographic order.
DatasetManifest load_manifest(const std::filesystem::path& root, Split split);

/// Antialiased bilinear (triangle filter) resize of a C x H x W tensor.
Tensor resize_bilinear(const Tensor& image, int height, int width);

/// Nearest-neighbour resize of an H x W label map.
std::vector<int> resize_labels(const std::vector<int>& labels, int src_h, int src_w, int height, int width);

/// One-hot encode an H x W label map into classes x H x W.
Tensor one_hot(const std::vector<int>& labels, int height, int width, int classes);

/// Raw [0, 1] rasters -> preprocessed pair: aerial center-cropped to a square
/// and resized; ground reduced to its central vertical half and resized; both
/// mapped to [-1, 1].
ScenePair preprocess_pair(const Tensor& raw_aerial, const Tensor& raw_ground, const ImageSizes& sizes = {});

/// Aerial half of preprocess_pair: center square crop, resize to size x size, map to [-1, 1].
Tensor preprocess_aerial(const Tensor& raw_aerial, int size);

/// Mask counterpart of the ground preprocessing (same crop, nearest resize).
Tensor preprocess_mask(const std::vector<int>& raw_labels, int raw_h, int raw_w, const ImageSizes& sizes = {});

/// Decode and preprocess pair `index` of the manifest.
ScenePair load_pair(const DatasetManifest& manifest, std::size_t index, const ImageSizes& sizes = {});

/// Number of layout categories emitted by the synthetic generator.
inline constexpr int kSyntheticCategories = 8;

/// Procedural pair: aerial rings/sectors per class, ground = polar resampling
/// of the aerial raster, mask from the analytic class layout. Deterministic in seed.
ScenePair generate_synthetic_pair(std::uint64_t seed, const ImageSizes& sizes = {});

/// Seed of the i-th pair of a synthetic set.
std::uint64_t synthetic_pair_seed(std::uint64_t base_seed, std::size_t index);

std::vector<ScenePair> generate_synthetic_set(std::size_t count, std::uint64_t base_seed, const ImageSizes& sizes = {});

/// Write pairs as `<root>/<split>/{aerial,ground,mask}/<id>.png` plus a
/// `dataset.json` marking the rasters as already preprocessed.
void write_dataset(const std::filesystem::path& root, Split split, const std::vector<ScenePair>& pairs);

}  // namespace xview
