#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xview/data.hpp"
#include "xview/losses.hpp"
#include "xview/networks.hpp"
#include "xview/optim.hpp"

namespace xview {

/// Where the hard masks of the synthesis and feature losses come from.
enum class MaskSource {
  Segmenter,  // argmax of the frozen segmenter on the real ground image
  Dataset,    // ground-truth masks shipped with the pairs
};

std::string to_string(MaskSource source);
MaskSource parse_mask_source(const std::string& name);

struct TrainConfig {
  float learning_rate = 2e-4f;
  float adam_beta1 = 0.5f;
  float adam_beta2 = 0.999f;
  int epochs = 30;
  int batch_size = 4;
  float init_std = 0.02f;
  std::uint64_t seed = 0;
  MaskSource mask_source = MaskSource::Segmenter;

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, 1e-8f}; }
  void validate() const;
};

/// Normal(0, std) for weights, zeros for biases and offset predictors.
void init_weights(Module& model, float std, std::uint64_t seed);

struct Batch {
  Tensor aerial;               // N x 3 x S x S
  Tensor ground;               // N x 3 x H x W
  std::optional<Tensor> mask;  // N x c x H x W, present when every pair has one
};

Batch make_batch(std::span<const ScenePair> pairs);

/// Random-access pair source shared by the data loader and probe trainers.
struct PairProvider {
  std::size_t count = 0;
  std::function<ScenePair(std::size_t)> load;

  static PairProvider from_manifest(DatasetManifest manifest, ImageSizes sizes);
  static PairProvider from_pairs(std::shared_ptr<const std::vector<ScenePair>> pairs);
};

/// Epoch order: a permutation seeded by (seed, epoch) only, so resuming needs no RNG state.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch);

/// Owns G, D and their optimizers; borrows a frozen segmenter that is never optimized.
class Trainer {
 public:
  Trainer(const GeneratorConfig& gen_cfg, const LossConfig& loss_cfg, const TrainConfig& train_cfg,
          std::shared_ptr<const Segmenter> segmenter);

  /// One D update on (real, detached fake) followed by one G update on the full objective.
  LossReport train_step(const Batch& batch);

  Generator& generator() { return *generator_; }
  Discriminator& discriminator() { return *discriminator_; }
  const Segmenter& segmenter() const { return *segmenter_; }
  Adam& generator_optimizer() { return *gen_opt_; }
  Adam& discriminator_optimizer() { return *disc_opt_; }
  long steps() const { return steps_; }

  /// Models, optimizer moments and counters.
  void save(const std::filesystem::path& dir, int epochs_completed) const;
  /// Returns the number of completed epochs recorded in the checkpoint.
  int load(const std::filesystem::path& dir);

 private:
  GeneratorConfig gen_cfg_;
  LossConfig loss_cfg_;
  TrainConfig train_cfg_;
  std::shared_ptr<const Segmenter> segmenter_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Discriminator> discriminator_;
  std::unique_ptr<Adam> gen_opt_;
  std::unique_ptr<Adam> disc_opt_;
  long steps_ = 0;
};

/// Load only the generator weights of a training checkpoint.
void load_generator(const std::filesystem::path& dir, Generator& generator);

struct LoopOptions {
  std::filesystem::path run_dir;                     // receives checkpoints/ and losses.csv
  std::optional<std::filesystem::path> resume_from;  // checkpoint directory
  long max_steps = -1;                               // stop early once this many total steps ran
  std::ostream* progress = nullptr;                  // per-step lines; nullptr = silent
  /// Called after each checkpoint is written (e.g. to snapshot the config next to it).
  std::function<void(const std::filesystem::path&)> on_checkpoint;
};

struct LoopResult {
  int epochs_completed = 0;
  long steps = 0;
  std::vector<LossReport> reports;  // steps run by this call
  std::vector<std::filesystem::path> checkpoints;
};

inline constexpr const char* kLossCsv = "losses.csv";

std::string checkpoint_name(int epoch);
std::string loss_csv_header(int num_classes);
std::string loss_csv_row(long step, const LossReport& r);

LoopResult train_loop(const PairProvider& data, Trainer& trainer, const TrainConfig& cfg, const LoopOptions& options);

}  // namespace xview
