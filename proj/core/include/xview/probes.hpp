#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>

#include "xview/networks.hpp"
#include "xview/training.hpp"

namespace xview {

/// Mean per-pixel cross-entropy of N x c x H x W logits against one-hot targets.
Var pixel_cross_entropy(const Var& logits, const Tensor& one_hot_target);

/// Mean cross-entropy of N x K logits against integer labels.
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

struct ProbeTrainConfig {
  int epochs = 100;
  int batch_size = 2;
  float learning_rate = 5e-3f;
  float init_std = 0.1f;
  std::uint64_t seed = 0;
};

/// Fits the segmenter on ground images and their masks, then freezes it.
/// Returns the final epoch's mean loss.
double train_segmenter(Segmenter& segmenter, const PairProvider& data, const ProbeTrainConfig& cfg,
                       std::ostream* progress = nullptr);

/// Fits the classifier on ground images and their scene labels, then freezes it.
double train_classifier(Classifier& classifier, const PairProvider& data, const ProbeTrainConfig& cfg,
                        std::ostream* progress = nullptr);

/// Probe checkpoint directories: weights plus a `probe.json` describing the architecture.
void save_segmenter(const std::filesystem::path& dir, const Segmenter& segmenter);
std::unique_ptr<Segmenter> load_segmenter(const std::filesystem::path& dir);
void save_classifier(const std::filesystem::path& dir, const Classifier& classifier);
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& dir);

}  // namespace xview
