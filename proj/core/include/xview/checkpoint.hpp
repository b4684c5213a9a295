#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xview/nn.hpp"
#include "xview/tensor.hpp"

namespace xview {

/// Named float32 tensors persisted as a directory holding `manifest.txt`
/// (one line per tensor: name, dtype, comma-separated shape, byte offset)
/// and `tensors.bin` (raw little-endian float32, concatenated in manifest order).
class TensorArchive {
 public:
  static constexpr const char* kManifestFile = "manifest.txt";
  static constexpr const char* kBlobFile = "tensors.bin";

  void put(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  std::vector<std::string> names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  void save(const std::filesystem::path& dir) const;
  static TensorArchive load(const std::filesystem::path& dir);

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> tensors_;
};

void save_module(TensorArchive& archive, const Module& module, const std::string& prefix);

/// Copies values into the module; missing names or shape mismatches throw ConfigurationError.
void load_module(const TensorArchive& archive, Module& module, const std::string& prefix);

/// Order-sensitive FNV-1a digest over parameter names and raw values.
std::uint64_t parameter_digest(const Module& module);

}  // namespace xview
