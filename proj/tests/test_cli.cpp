#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "xview/metrics.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string("\"") + XVIEW_CLI_PATH + "\" " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) o.output += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kSizes =
    " --set generator.aerial_size=32 --set generator.ground_height=16 --set generator.ground_width=64"
    " --set generator.base_channels=4 --set generator.feature_channels=8 --set generator.encoder_blocks=1"
    " --set generator.decoder_blocks=1 --set generator.attention_reduction=4"
    " --set generator.discriminator_channels=4";

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "xview_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// One shared segmenter probe and one trained run for the downstream commands.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const Outcome seg = run("seg-train --synthetic --pairs 4 --epochs 5 --channels 4" + kSizes + " --out \"" +
                            (scratch() / "seg").string() + "\" --classifier \"" + (scratch() / "cls").string() +
                            "\"");
    ASSERT_EQ(seg.code, 0) << seg.output;
    const Outcome tr = run("train --synthetic --pairs 8 --epochs 2 --quiet --run-name base --segmenter \"" +
                           (scratch() / "seg").string() + "\" --out \"" + (scratch() / "runs").string() + "\"" +
                           kSizes);
    ASSERT_EQ(tr.code, 0) << tr.output;
  }

  static fs::path run_dir() { return scratch() / "runs" / "base"; }
  static fs::path checkpoint() { return run_dir() / "checkpoints" / "epoch_0002"; }
};

}  // namespace

TEST_F(Cli, TrainWritesOneCheckpointPerEpoch) {
  EXPECT_TRUE(fs::is_directory(run_dir() / "checkpoints" / "epoch_0001"));
  EXPECT_TRUE(fs::is_directory(checkpoint()));
  EXPECT_TRUE(fs::exists(run_dir() / "config.json"));
  EXPECT_TRUE(fs::exists(checkpoint() / "config.json"));
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(run_dir() / "checkpoints")) n += e.is_directory();
  EXPECT_EQ(n, 2u);
  std::istringstream csv(read_file(run_dir() / "losses.csv"));
  std::size_t rows = 0;
  for (std::string l; std::getline(csv, l);) ++rows;
  EXPECT_EQ(rows, 1u + 4u);
}

TEST_F(Cli, SameSeedGivesIdenticalLossCsv) {
  const Outcome again = run("train --synthetic --pairs 8 --epochs 2 --quiet --run-name again --segmenter \"" +
                            (scratch() / "seg").string() + "\" --out \"" + (scratch() / "runs").string() + "\"" +
                            kSizes);
  ASSERT_EQ(again.code, 0) << again.output;
  EXPECT_EQ(read_file(scratch() / "runs" / "again" / "losses.csv"), read_file(run_dir() / "losses.csv"));
}

TEST_F(Cli, UsageErrorsExitOne) {
  const Outcome unknown = run("train --no-such-flag");
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.output.find("--no-such-flag"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--help").code, 0);
  const Outcome bad_key = run("train --synthetic --set train.epoch=2");
  EXPECT_EQ(bad_key.code, 1);
  EXPECT_NE(bad_key.output.find("train.epochs"), std::string::npos);
}

TEST_F(Cli, SynthesizeWritesPanoramaAndSheetPerInput) {
  const fs::path data = scratch() / "aerials";
  ASSERT_EQ(run("synth-data --count 3 --seed 4 --out \"" + data.string() + "\"" + kSizes).code, 0);
  const fs::path input = data / "train" / "aerial";
  const fs::path out1 = scratch() / "synth1", out2 = scratch() / "synth2";
  for (const auto& out : {out1, out2}) {
    const Outcome o = run("synthesize --checkpoint \"" + checkpoint().string() + "\" --input \"" + input.string() +
                          "\" --out \"" + out.string() + "\"");
    ASSERT_EQ(o.code, 0) << o.output;
  }
  std::size_t panoramas = 0, sheets = 0;
  for (const auto& e : fs::directory_iterator(out1)) {
    const std::string name = e.path().filename().string();
    if (name.ends_with("_sheet.png")) {
      ++sheets;
    } else if (name.ends_with(".png")) {
      ++panoramas;
    }
    EXPECT_EQ(read_file(e.path()), read_file(out2 / name)) << name;
  }
  EXPECT_EQ(panoramas, 3u);
  EXPECT_EQ(sheets, 3u);
}

TEST_F(Cli, MissingCheckpointIsAConfigurationError) {
  const Outcome o = run("synthesize --checkpoint \"" + (scratch() / "nowhere").string() + "\" --input \"" +
                        scratch().string() + "\" --out \"" + (scratch() / "never").string() + "\"");
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.output.find("error"), std::string::npos);
  EXPECT_FALSE(fs::exists(scratch() / "never"));
}

TEST_F(Cli, IdentityEvalHitsCaps) {
  const fs::path out = scratch() / "eval_identity";
  const Outcome o = run("eval --identity --synthetic --pairs 3 --segmenter \"" + (scratch() / "seg").string() +
                        "\" --classifier \"" + (scratch() / "cls").string() + "\" --out \"" + out.string() + "\"" +
                        kSizes);
  ASSERT_EQ(o.code, 0) << o.output;
  const auto r = xview::EvalReport::parse_key_values(read_file(out / "eval.txt"));
  EXPECT_EQ(r.count, 3u);
  EXPECT_EQ(r.psnr, xview::kMetricCapDb);
  EXPECT_NEAR(r.ssim, 1.0, 1e-6);
  ASSERT_TRUE(r.miou.has_value());
  EXPECT_EQ(*r.miou, 1.0);
  EXPECT_TRUE(r.is_all.has_value());
  EXPECT_TRUE(fs::exists(out / "eval_table.txt"));
}

TEST_F(Cli, MissingClassifierComputesSubsetWithWarning) {
  const fs::path out = scratch() / "eval_subset";
  const Outcome o = run("eval --checkpoint \"" + checkpoint().string() + "\" --synthetic --pairs 2 --segmenter \"" +
                        (scratch() / "seg").string() + "\" --out \"" + out.string() + "\"");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("classifier"), std::string::npos);
  const auto r = xview::EvalReport::parse_key_values(read_file(out / "eval.txt"));
  const auto v = r.values();
  EXPECT_EQ(v.size(), 5u);
  EXPECT_TRUE(v.contains("psnr") && v.contains("ssim") && v.contains("sd") && v.contains("miou"));
}
