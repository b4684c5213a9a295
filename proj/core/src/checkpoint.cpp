#include "xview/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xview/error.hpp"

namespace xview {

namespace fs = std::filesystem;

void TensorArchive::put(const std::string& name, Tensor tensor) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw InvalidArgument("tensor archive: invalid tensor name '" + name + "'");
  }
  if (!tensors_.contains(name)) order_.push_back(name);
  tensors_[name] = std::move(tensor);
}

bool TensorArchive::contains(const std::string& name) const { return tensors_.contains(name); }

const Tensor& TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigurationError("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

namespace {

void write_le_floats(std::ostream& os, const Tensor& t) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  } else {
    for (float f : t.values()) {
      auto u = std::bit_cast<std::uint32_t>(f);
      unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                            static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
      os.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

}  // namespace

void TensorArchive::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / kManifestFile);
  std::ofstream blob(dir / kBlobFile, std::ios::binary);
  if (!manifest || !blob) throw IoError("cannot write checkpoint files in " + dir.string());
  std::uint64_t offset = 0;
  for (const auto& name : order_) {
    const Tensor& t = tensors_.at(name);
    manifest << name << " f32 ";
    for (std::size_t i = 0; i < t.shape().size(); ++i) manifest << (i ? "," : "") << t.shape()[i];
    if (t.shape().empty()) manifest << "scalar";
    manifest << ' ' << offset << '\n';
    write_le_floats(blob, t);
    offset += t.numel() * sizeof(float);
  }
  if (!manifest || !blob) throw IoError("failed writing checkpoint " + dir.string());
}

TensorArchive TensorArchive::load(const fs::path& dir) {
  std::ifstream manifest(dir / kManifestFile);
  if (!manifest) throw ConfigurationError("checkpoint not found: " + (dir / kManifestFile).string());
  std::ifstream blob(dir / kBlobFile, std::ios::binary);
  if (!blob) throw IoError("checkpoint blob missing: " + (dir / kBlobFile).string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

  TensorArchive archive;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name, dtype, shape_text;
    std::uint64_t offset = 0;
    if (!(is >> name >> dtype >> shape_text >> offset) || dtype != "f32") {
      throw IoError("malformed checkpoint manifest line " + std::to_string(line_no) + " in " + dir.string());
    }
    Shape shape;
    if (shape_text != "scalar") {
      std::istringstream ss(shape_text);
      std::string part;
      while (std::getline(ss, part, ',')) shape.push_back(std::stoi(part));
    }
    const std::size_t count = shape_numel(shape);
    if (offset + count * sizeof(float) > bytes.size()) {
      throw IoError("checkpoint blob too short for tensor '" + name + "' in " + dir.string());
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + offset + 4 * i);
      const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                              (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      values[i] = std::bit_cast<float>(u);
    }
    archive.put(name, Tensor(std::move(shape), std::move(values)));
  }
  return archive;
}

void save_module(TensorArchive& archive, const Module& module, const std::string& prefix) {
  for (const auto& p : module.parameters(prefix)) archive.put(p.name, p.var.value());
}

void load_module(const TensorArchive& archive, Module& module, const std::string& prefix) {
  for (auto& p : module.parameters(prefix)) {
    const Tensor& t = archive.get(p.name);
    if (t.shape() != p.var.shape()) {
      throw ConfigurationError("checkpoint tensor '" + p.name + "' has shape " + shape_str(t.shape()) +
                               ", model expects " + shape_str(p.var.shape()));
    }
    p.var.mutable_value() = t;
  }
}

std::uint64_t parameter_digest(const Module& module) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : module.parameters()) {
    mix(p.name.data(), p.name.size());
    mix(p.var.value().data(), p.var.value().numel() * sizeof(float));
  }
  return h;
}

}  // namespace xview
