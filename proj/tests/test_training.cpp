#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "support.hpp"
#include "xview/checkpoint.hpp"
#include "xview/error.hpp"
#include "xview/training.hpp"

using namespace xview;
namespace fs = std::filesystem;

namespace {

GeneratorConfig tiny_generator() {
  GeneratorConfig cfg;
  cfg.base_channels = 4;
  cfg.feature_channels = 8;
  cfg.encoder_blocks = 1;
  cfg.decoder_blocks = 1;
  cfg.attention_reduction = 4;
  cfg.discriminator_channels = 4;
  cfg.aerial_size = 32;
  cfg.ground_height = 16;
  cfg.ground_width = 64;
  return cfg;
}

const ImageSizes kTiny{32, 16, 64};

std::shared_ptr<Segmenter> frozen_segmenter(std::uint64_t seed = 3) {
  auto s = std::make_shared<Segmenter>(SegmenterConfig{SegmenterArch::Tiny, 4, 4});
  init_weights(*s, 0.3f, seed);
  s->freeze();
  return s;
}

PairProvider tiny_pairs(std::size_t n) {
  return PairProvider::from_pairs(std::make_shared<std::vector<ScenePair>>(generate_synthetic_set(n, 5, kTiny)));
}

TrainConfig tiny_train(int epochs = 2, int batch = 4) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.seed = 17;
  return tc;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("xview_train_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(TrainConfig, Defaults) {
  const TrainConfig tc;
  EXPECT_EQ(tc.learning_rate, 2e-4f);
  EXPECT_EQ(tc.adam_beta1, 0.5f);
  EXPECT_EQ(tc.adam_beta2, 0.999f);
  EXPECT_EQ(tc.epochs, 30);
  EXPECT_EQ(tc.batch_size, 4);
  EXPECT_EQ(tc.init_std, 0.02f);
  EXPECT_EQ(tc.mask_source, MaskSource::Segmenter);
  TrainConfig bad = tc;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigurationError);
  EXPECT_EQ(parse_mask_source("dataset"), MaskSource::Dataset);
  EXPECT_THROW(parse_mask_source("oracle"), ConfigurationError);
}

TEST(InitWeights, NormalStatisticsOnTenThousandWeights) {
  Linear layer(100, 100);
  init_weights(layer, 0.02f, 123);
  const Tensor& w = layer.weight().value();
  ASSERT_EQ(w.numel(), 10000u);
  double m = 0.0, v = 0.0;
  for (float x : w.values()) m += x;
  m /= 10000.0;
  for (float x : w.values()) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / 10000.0);
  EXPECT_LT(std::abs(m), 3.0 * 0.02 / std::sqrt(10000.0));
  EXPECT_GE(sd, 0.018);
  EXPECT_LE(sd, 0.022);
  for (float x : layer.bias().value().values()) EXPECT_EQ(x, 0.0f);
}

TEST(InitWeights, OffsetPredictorsAreZero) {
  Generator g(tiny_generator());
  init_weights(g, 0.02f, 1);
  for (const auto& p : g.parameters()) {
    if (p.init != ParamInit::Zero) continue;
    for (float x : p.var.value().values()) ASSERT_EQ(x, 0.0f) << p.name;
  }
  std::size_t offsets = 0;
  for (const auto& p : g.parameters()) offsets += p.name.find("offset.weight") != std::string::npos;
  EXPECT_EQ(offsets, 4u);
}

TEST(Batching, StacksPairsAndDropsIncompleteMasks) {
  auto pairs = generate_synthetic_set(3, 2, kTiny);
  Batch b = make_batch(pairs);
  EXPECT_EQ(b.aerial.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_EQ(b.ground.shape(), (Shape{3, 3, 16, 64}));
  ASSERT_TRUE(b.mask.has_value());
  EXPECT_EQ(b.mask->shape(), (Shape{3, 4, 16, 64}));
  pairs[1].ground_mask.reset();
  EXPECT_FALSE(make_batch(pairs).mask.has_value());
  EXPECT_THROW(make_batch(std::span<const ScenePair>{}), InvalidArgument);
}

TEST(Batching, EpochOrderIsASeededPermutation) {
  const auto a = epoch_order(10, 7, 0);
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(10);
  std::iota(iota.begin(), iota.end(), 0u);
  EXPECT_EQ(sorted, iota);
  EXPECT_EQ(a, epoch_order(10, 7, 0));
  EXPECT_NE(a, epoch_order(10, 7, 1));
  EXPECT_NE(a, epoch_order(10, 8, 0));
}

TEST(Trainer, RequiresFrozenSegmenter) {
  auto s = std::make_shared<Segmenter>(SegmenterConfig{SegmenterArch::Tiny, 4, 4});
  EXPECT_THROW(Trainer(tiny_generator(), LossConfig{}, tiny_train(), s), ConfigurationError);
  EXPECT_THROW(Trainer(tiny_generator(), LossConfig{}, tiny_train(), nullptr), ConfigurationError);
}

TEST(Trainer, OptimizerParameterSetsAreDisjointAndExcludeSegmenter) {
  auto seg = frozen_segmenter();
  Trainer t(tiny_generator(), LossConfig{}, tiny_train(), seg);
  std::set<const Node*> g, d;
  for (const auto& p : t.generator_optimizer().parameters()) g.insert(p.var.node().get());
  for (const auto& p : t.discriminator_optimizer().parameters()) d.insert(p.var.node().get());
  EXPECT_EQ(g.size(), t.generator().parameters().size());
  EXPECT_EQ(d.size(), t.discriminator().parameters().size());
  for (const Node* n : g) EXPECT_EQ(d.count(n), 0u);
  for (const auto& p : seg->parameters()) {
    EXPECT_FALSE(t.generator_optimizer().owns(p.var)) << p.name;
    EXPECT_FALSE(t.discriminator_optimizer().owns(p.var)) << p.name;
  }
}

TEST(Trainer, StepKeepsSegmenterAndUpdatesBothModels) {
  auto seg = frozen_segmenter();
  Trainer t(tiny_generator(), LossConfig{}, tiny_train(), seg);
  const std::uint64_t seg_before = parameter_digest(*seg);
  const std::uint64_t g_before = parameter_digest(t.generator());
  const std::uint64_t d_before = parameter_digest(t.discriminator());
  const auto pairs = generate_synthetic_set(2, 3, kTiny);
  const LossReport r = t.train_step(make_batch(pairs));
  EXPECT_EQ(parameter_digest(*seg), seg_before);
  EXPECT_NE(parameter_digest(t.generator()), g_before);
  EXPECT_NE(parameter_digest(t.discriminator()), d_before);
  EXPECT_NEAR(r.total, total_loss(r, LossConfig{}), 1e-6);
  EXPECT_EQ(r.per_class_syn.size(), 4u);
  EXPECT_EQ(t.steps(), 1);
}

TEST(Trainer, IdenticalSeedsGiveIdenticalReports) {
  const auto pairs = generate_synthetic_set(4, 9, kTiny);
  auto run = [&] {
    Trainer t(tiny_generator(), LossConfig{}, tiny_train(1, 2), frozen_segmenter());
    std::vector<std::string> rows;
    for (int s = 0; s < 5; ++s) {
      const std::vector<ScenePair> b{pairs[s % 4], pairs[(s + 1) % 4]};
      rows.push_back(loss_csv_row(s + 1, t.train_step(make_batch(b))));
    }
    return rows;
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, DatasetMaskSourceNeedsMasks) {
  TrainConfig tc = tiny_train();
  tc.mask_source = MaskSource::Dataset;
  Trainer t(tiny_generator(), LossConfig{}, tc, frozen_segmenter());
  auto pairs = generate_synthetic_set(1, 3, kTiny);
  EXPECT_NO_THROW(t.train_step(make_batch(pairs)));
  pairs[0].ground_mask.reset();
  EXPECT_THROW(t.train_step(make_batch(pairs)), ConfigurationError);
}

TEST(Trainer, NonFiniteLossAbortsWithDiagnostics) {
  Trainer t(tiny_generator(), LossConfig{}, tiny_train(), frozen_segmenter());
  auto pairs = generate_synthetic_set(1, 3, kTiny);
  pairs[0].ground[5] = std::nanf("");
  try {
    t.train_step(make_batch(pairs));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(TrainLoop, StepsPerEpochCsvRowsAndCheckpoints) {
  const fs::path dir = fresh_dir("loop");
  Trainer t(tiny_generator(), LossConfig{}, tiny_train(2, 4), frozen_segmenter());
  LoopOptions opts;
  opts.run_dir = dir;
  std::ostringstream progress;
  opts.progress = &progress;
  const LoopResult r = train_loop(tiny_pairs(8), t, tiny_train(2, 4), opts);
  EXPECT_EQ(r.steps, 4);
  EXPECT_EQ(r.epochs_completed, 2);
  ASSERT_EQ(r.checkpoints.size(), 2u);
  EXPECT_EQ(r.checkpoints[0].filename(), checkpoint_name(1));
  const auto csv = lines(read_file(dir / kLossCsv));
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], loss_csv_header(4));
  EXPECT_EQ(csv[0].rfind("step,syn,fea,sem,ae,adv_g,adv_d,total", 0), 0u);
  const auto prog = lines(progress.str());
  ASSERT_EQ(prog.size(), 4u);
  std::istringstream first(prog[0]);
  std::vector<double> fields;
  for (double v; first >> v;) fields.push_back(v);
  EXPECT_EQ(fields.size(), 9u);
  EXPECT_EQ(fields[0], 1.0);
  EXPECT_EQ(fields[1], 1.0);
}

TEST(TrainLoop, ResumeReproducesUninterruptedRun) {
  const auto data = tiny_pairs(4);
  const TrainConfig tc = tiny_train(3, 2);
  const fs::path full_dir = fresh_dir("full"), part_dir = fresh_dir("part");
  {
    Trainer t(tiny_generator(), LossConfig{}, tc, frozen_segmenter());
    LoopOptions o;
    o.run_dir = full_dir;
    train_loop(data, t, tc, o);
  }
  {
    TrainConfig first = tc;
    first.epochs = 1;
    Trainer t(tiny_generator(), LossConfig{}, first, frozen_segmenter());
    LoopOptions o;
    o.run_dir = part_dir;
    train_loop(data, t, first, o);
  }
  {
    Trainer t(tiny_generator(), LossConfig{}, tc, frozen_segmenter());
    LoopOptions o;
    o.run_dir = part_dir;
    o.resume_from = part_dir / "checkpoints" / checkpoint_name(1);
    const LoopResult r = train_loop(data, t, tc, o);
    EXPECT_EQ(r.epochs_completed, 3);
    EXPECT_EQ(r.steps, 6);
  }
  EXPECT_EQ(read_file(full_dir / kLossCsv), read_file(part_dir / kLossCsv));
  const TensorArchive a = TensorArchive::load(full_dir / "checkpoints" / checkpoint_name(3));
  const TensorArchive b = TensorArchive::load(part_dir / "checkpoints" / checkpoint_name(3));
  ASSERT_EQ(a.names(), b.names());
  for (const auto& n : a.names()) ASSERT_EQ(a.get(n).storage(), b.get(n).storage()) << n;
}

TEST(TrainLoop, ResumeDropsRowsPastTheCheckpoint) {
  const auto data = tiny_pairs(4);
  const TrainConfig tc = tiny_train(2, 2);
  const fs::path dir = fresh_dir("truncate");
  {
    Trainer t(tiny_generator(), LossConfig{}, tc, frozen_segmenter());
    LoopOptions o;
    o.run_dir = dir;
    train_loop(data, t, tc, o);
  }
  const std::string complete = read_file(dir / kLossCsv);
  Trainer t(tiny_generator(), LossConfig{}, tc, frozen_segmenter());
  LoopOptions o;
  o.run_dir = dir;
  o.resume_from = dir / "checkpoints" / checkpoint_name(1);
  train_loop(data, t, tc, o);
  EXPECT_EQ(read_file(dir / kLossCsv), complete);
}

TEST(TrainLoop, MaxStepsStopsEarlyWithoutPartialCheckpoint) {
  const fs::path dir = fresh_dir("maxsteps");
  const TrainConfig tc = tiny_train(5, 2);
  Trainer t(tiny_generator(), LossConfig{}, tc, frozen_segmenter());
  LoopOptions o;
  o.run_dir = dir;
  o.max_steps = 3;
  const LoopResult r = train_loop(tiny_pairs(4), t, tc, o);
  EXPECT_EQ(r.steps, 3);
  EXPECT_EQ(r.epochs_completed, 1);
  EXPECT_EQ(lines(read_file(dir / kLossCsv)).size(), 4u);
}
