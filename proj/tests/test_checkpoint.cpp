#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "support.hpp"
#include "xview/checkpoint.hpp"
#include "xview/error.hpp"
#include "xview/networks.hpp"
#include "xview/training.hpp"

using namespace xview;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("xview_ckpt_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(TensorArchive, RoundTripIsBitExact) {
  TensorArchive a;
  a.put("w.conv", test::random_tensor({2, 3, 3, 3}, 1));
  a.put("scalar", Tensor({1}, std::vector<float>{-0.0f}));
  const fs::path dir = scratch_dir("roundtrip");
  a.save(dir);
  const TensorArchive b = TensorArchive::load(dir);
  ASSERT_EQ(b.names(), a.names());
  for (const auto& name : a.names()) {
    EXPECT_EQ(b.get(name).shape(), a.get(name).shape());
    EXPECT_EQ(0, std::memcmp(b.get(name).data(), a.get(name).data(), a.get(name).numel() * sizeof(float)));
  }
}

TEST(TensorArchive, ManifestIsPlainText) {
  TensorArchive a;
  a.put("x", Tensor({2, 5}, 1.0f));
  a.put("y", Tensor({3}, 2.0f));
  const fs::path dir = scratch_dir("manifest");
  a.save(dir);
  std::ifstream in(dir / TensorArchive::kManifestFile);
  std::string name, dtype, shape;
  std::size_t offset = 0;
  in >> name >> dtype >> shape >> offset;
  EXPECT_EQ(name, "x");
  EXPECT_EQ(dtype, "f32");
  EXPECT_EQ(shape, "2,5");
  EXPECT_EQ(offset, 0u);
  in >> name >> dtype >> shape >> offset;
  EXPECT_EQ(offset, 40u);
  EXPECT_EQ(fs::file_size(dir / TensorArchive::kBlobFile), 52u);
}

TEST(TensorArchive, MissingDirectoryIsConfigurationError) {
  EXPECT_THROW(TensorArchive::load(scratch_dir("absent")), ConfigurationError);
}

TEST(TensorArchive, TruncatedBlobIsIoError) {
  TensorArchive a;
  a.put("x", Tensor({64}, 1.0f));
  const fs::path dir = scratch_dir("truncated");
  a.save(dir);
  fs::resize_file(dir / TensorArchive::kBlobFile, 10);
  EXPECT_THROW(TensorArchive::load(dir), IoError);
}

TEST(ModuleCheckpoint, LoadRestoresParametersAndRejectsShapeMismatch) {
  GeneratorConfig cfg;
  cfg.base_channels = 4;
  cfg.feature_channels = 8;
  cfg.aerial_size = 16;
  cfg.ground_height = 16;
  cfg.ground_width = 32;
  cfg.discriminator_channels = 4;
  Discriminator d1(cfg), d2(cfg);
  init_weights(d1, 0.02f, 1);
  init_weights(d2, 0.02f, 2);
  ASSERT_NE(parameter_digest(d1), parameter_digest(d2));
  TensorArchive a;
  save_module(a, d1, "D.");
  load_module(a, d2, "D.");
  EXPECT_EQ(parameter_digest(d1), parameter_digest(d2));

  cfg.discriminator_channels = 8;
  Discriminator wider(cfg);
  EXPECT_THROW(load_module(a, wider, "D."), ConfigurationError);
}
