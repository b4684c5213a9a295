#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xview/tensor.hpp"

namespace xview {

/// Interleaved 8-bit raster.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Decode PNG or JPEG (by extension) to 8-bit RGB.
Image8 read_rgb8(const std::filesystem::path& path);

/// Decode a single-channel label PNG; palette images yield raw palette indices.
Image8 read_labels8(const std::filesystem::path& path);

/// Encode 1-channel (grayscale) or 3-channel (RGB) PNG.
void write_png(const std::filesystem::path& path, const Image8& image);

/// Encode a label map as an indexed (palette) PNG.
void write_label_png(const std::filesystem::path& path, const Image8& labels);

/// 3 x H x W tensor in [0, 1] from an 8-bit RGB raster.
Tensor to_unit_tensor(const Image8& image);

/// Quantize a 3 x H x W tensor in [-1, 1] via round((x + 1) / 2 * 255), clamped.
Image8 from_signed_tensor(const Tensor& image);

}  // namespace xview
