#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xview/data.hpp"
#include "xview/losses.hpp"
#include "xview/networks.hpp"
#include "xview/training.hpp"

namespace xview {

struct DataConfig {
  std::string root;  // dataset root holding train/ and test/
  bool synthetic = false;
  int pairs = 8;     // synthetic pair count
  std::uint64_t synthetic_seed = 1;
};

struct ProbeConfig {
  std::string segmenter;   // probe checkpoint directory
  std::string classifier;  // optional
};

struct RunConfig {
  TrainConfig train;
  LossConfig loss;
  GeneratorConfig generator;
  DataConfig data;
  ProbeConfig probes;
  std::string output_root;  // empty: $XVIEW_OUTPUT_ROOT, then ./runs
  int is_splits = 1;

  ImageSizes sizes() const { return {generator.aerial_size, generator.ground_height, generator.ground_width}; }

  /// Flat dotted keys accepted by from_json / set.
  static std::vector<std::string> keys();

  /// Nested JSON text, one object per section.
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Override one key from text, e.g. set("train.epochs", "2"). Unknown keys throw
  /// ConfigurationError listing the valid ones.
  void set(const std::string& key, const std::string& value);
  /// Parse "key=value".
  void apply_override(const std::string& assignment);

  void validate() const;
};

}  // namespace xview
