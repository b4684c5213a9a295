#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xview/autograd.hpp"
#include "xview/geometry.hpp"
#include "xview/nn.hpp"

namespace xview {

inline constexpr int kNumClasses = 4;

/// Architecture hyperparameters shared by the generator and discriminator.
struct GeneratorConfig {
  int num_classes = kNumClasses;
  int encoder_blocks = 4;
  int decoder_blocks = 5;
  int base_channels = 64;
  int feature_channels = 256;
  int downsample_factor = 4;
  int attention_reduction = 16;
  int discriminator_channels = 64;
  int aerial_size = 256;
  int ground_height = 128;
  int ground_width = 512;

  int feature_height() const { return ground_height / downsample_factor; }
  int feature_width() const { return ground_width / downsample_factor; }
  int aerial_feature_size() const { return aerial_size / downsample_factor; }

  /// Throws ConfigurationError on inconsistent values.
  void validate() const;

  bool operator==(const GeneratorConfig&) const = default;
};

/// Stem 7x7 conv, two stride-2 stages, then residual blocks. Used for both
/// E_a and E_g; each instance owns its own parameters.
class Encoder : public Module {
 public:
  Encoder(const GeneratorConfig& cfg, int input_height, int input_width);

  /// N x 3 x H x W -> N x C_f x H/4 x W/4.
  Var forward(const Var& image) const;

 private:
  int input_height_;
  int input_width_;
  Conv2d stem_;
  Conv2d down1_;
  Conv2d down2_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
};

/// Gate_i = sigmoid(MLP_i(avgpool f) + MLP_i(maxpool f)), one instance per class.
class ChannelAttention : public Module {
 public:
  ChannelAttention(int channels, int reduction);

  /// N x C x H x W -> N x C, entries in (0, 1).
  Var forward(const Var& feature) const;

  Linear& hidden() { return fc1_; }
  Linear& output() { return fc2_; }

 private:
  Linear fc1_;
  Linear fc2_;
};

/// Deformable 3x3 convolution whose offsets come from a zero-initialized
/// plain 3x3 convolution over the same input.
class DeformConv2d : public Module {
 public:
  DeformConv2d(int in_channels, int out_channels, int kernel = 3);

  Var forward(const Var& x) const;
  Var offsets(const Var& x) const;

  const Conv2d& offset_conv() const { return offset_conv_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Conv2d offset_conv_;
  Var weight_;
  Var bias_;
};

/// D_i: deformable conv -> IN -> ReLU -> conv -> IN -> ReLU.
class WarpBlock : public Module {
 public:
  explicit WarpBlock(int channels);

  Var forward(const Var& x) const;

  DeformConv2d& deform() { return deform_; }
  Conv2d& refine() { return refine_; }

 private:
  DeformConv2d deform_;
  Conv2d refine_;
};

struct BranchOutputs {
  Var polar;                  // f_p
  std::vector<Var> gates;     // M_i, N x C_f each
  std::vector<Var> per_class; // f_ag^i
  Var fused;                  // f_ag = sum_i f_ag^i
};

/// Polar alignment followed by per-class attention and warping branches.
class SemanticTransform : public Module {
 public:
  explicit SemanticTransform(const GeneratorConfig& cfg);

  BranchOutputs forward(const Var& aerial_feature) const;

  Var polar_align(const Var& aerial_feature) const;
  Var attention(const Var& polar_feature, int class_index) const;

  const PolarGrid& grid() const { return grid_; }
  int num_classes() const { return static_cast<int>(attention_.size()); }
  ChannelAttention& attention_module(int i) { return *attention_[static_cast<std::size_t>(i)]; }
  WarpBlock& warp_module(int i) { return *warp_[static_cast<std::size_t>(i)]; }

 private:
  int aerial_feature_size_;
  int channels_;
  PolarGrid grid_;
  std::vector<std::unique_ptr<ChannelAttention>> attention_;
  std::vector<std::unique_ptr<WarpBlock>> warp_;
};

/// Residual blocks, two transposed-conv upsampling stages, 7x7 conv + tanh.
class Decoder : public Module {
 public:
  explicit Decoder(const GeneratorConfig& cfg);

  /// N x C_f x H/4 x W/4 -> N x 3 x H x W in (-1, 1).
  Var forward(const Var& feature) const;

 private:
  int feature_channels_;
  int feature_height_;
  int feature_width_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
  ConvTranspose2d up1_;
  ConvTranspose2d up2_;
  Conv2d out_;
};

struct SynthesisOutputs {
  Var aerial_feature;  // f_a
  BranchOutputs branches;
  Var image;           // I_g'
};

/// E_a, T_ag, G_g and the auxiliary E_g.
class Generator : public Module {
 public:
  explicit Generator(const GeneratorConfig& cfg);

  SynthesisOutputs synthesize(const Var& aerial) const;
  Var encode_ground(const Var& ground) const { return ground_encoder.forward(ground); }
  Var reconstruct(const Var& ground) const { return decoder.forward(ground_encoder.forward(ground)); }

  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;

 public:
  Encoder aerial_encoder;
  SemanticTransform transform;
  Decoder decoder;
  Encoder ground_encoder;
};

/// Patch discriminator: four 4x4 stride-2 convs then a 3x3 scoring conv.
/// Output logits are N x 1 x H/16 x W/16.
class Discriminator : public Module {
 public:
  explicit Discriminator(const GeneratorConfig& cfg);

  Var logits(const Var& image) const;
  /// sigmoid(logits)
  Var probabilities(const Var& image) const;

 private:
  int height_;
  int width_;
  Conv2d c1_;
  Conv2d c2_;
  Conv2d c3_;
  Conv2d c4_;
  Conv2d score_;
};

enum class SegmenterArch { SegNet, Tiny };

struct SegmenterConfig {
  SegmenterArch arch = SegmenterArch::SegNet;
  int channels = 16;
  int num_classes = kNumClasses;
};

std::string to_string(SegmenterArch arch);
SegmenterArch parse_segmenter_arch(const std::string& name);

/// Frozen per-pixel classifier S_seg. Pluggable architecture, fixed contract:
/// softmax output over num_classes, differentiable in its input, parameters
/// never updated once frozen.
class Segmenter : public Module {
 public:
  explicit Segmenter(const SegmenterConfig& cfg);

  /// Raw class scores; used while training the segmenter itself.
  Var logits(const Var& image) const;

  /// Soft mask N x c x H x W. Requires freeze() (after loading or training).
  Var segment(const Var& image) const;

  void freeze();
  bool frozen() const { return frozen_; }
  const SegmenterConfig& config() const { return cfg_; }

 private:
  SegmenterConfig cfg_;
  bool frozen_ = false;
  std::vector<std::unique_ptr<Conv2d>> convs_;
};

struct ClassifierConfig {
  int channels = 16;
  int num_categories = 8;
};

/// Frozen scene classifier probe for the realism metrics.
class Classifier : public Module {
 public:
  explicit Classifier(const ClassifierConfig& cfg);

  /// N x K scores.
  Var logits(const Var& image) const;
  /// N x K probabilities. Requires freeze().
  Var probabilities(const Var& image) const;

  void freeze();
  bool frozen() const { return frozen_; }
  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  bool frozen_ = false;
  Conv2d c1_;
  Conv2d c2_;
  Conv2d c3_;
  Linear head_;
};

}  // namespace xview
