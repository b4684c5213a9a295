#include "xview/networks.hpp"

#include "xview/error.hpp"
#include "xview/ops.hpp"

namespace xview {

namespace {

void require_image(const Var& image, int channels, int height, int width, const char* who) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != channels || s[2] != height || s[3] != width) {
    throw ShapeError(std::string(who) + ": expected N x " + std::to_string(channels) + " x " +
                     std::to_string(height) + " x " + std::to_string(width) + ", got " + shape_str(s));
  }
}

Var norm_relu(const Var& x) { return ops::relu(ops::instance_norm(x)); }

}  // namespace

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigurationError("generator config: " + msg); };
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (encoder_blocks < 0 || decoder_blocks < 0) fail("block counts must be >= 0");
  if (base_channels < 1 || feature_channels < 1 || discriminator_channels < 1) fail("channel counts must be >= 1");
  if (downsample_factor != 4) fail("downsample_factor is fixed at 4 (two stride-2 stages)");
  if (attention_reduction < 1) fail("attention_reduction must be >= 1");
  if (aerial_size % 4 != 0 || aerial_size < 8) fail("aerial_size must be a multiple of 4 and >= 8");
  if (ground_height % 16 != 0 || ground_width % 16 != 0) fail("ground dimensions must be multiples of 16");
}

Encoder::Encoder(const GeneratorConfig& cfg, int input_height, int input_width)
    : input_height_(input_height),
      input_width_(input_width),
      stem_(3, cfg.base_channels, 7),
      down1_(cfg.base_channels, 2 * cfg.base_channels, 3, 2, 1),
      down2_(2 * cfg.base_channels, cfg.feature_channels, 3, 2, 1) {
  add_child("stem", stem_);
  add_child("down1", down1_);
  add_child("down2", down2_);
  for (int i = 0; i < cfg.encoder_blocks; ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock>(cfg.feature_channels));
    add_child("block" + std::to_string(i), *blocks_.back());
  }
}

Var Encoder::forward(const Var& image) const {
  require_image(image, 3, input_height_, input_width_, "encoder");
  Var h = norm_relu(stem_.forward(image));
  h = norm_relu(down1_.forward(h));
  h = norm_relu(down2_.forward(h));
  for (const auto& b : blocks_) h = b->forward(h);
  return h;
}

ChannelAttention::ChannelAttention(int channels, int reduction)
    : fc1_(channels, std::max(1, channels / reduction)), fc2_(std::max(1, channels / reduction), channels) {
  add_child("fc1", fc1_);
  add_child("fc2", fc2_);
}

Var ChannelAttention::forward(const Var& feature) const {
  auto mlp = [this](const Var& v) { return fc2_.forward(ops::relu(fc1_.forward(v))); };
  return ops::sigmoid(ops::add(mlp(ops::global_avg_pool(feature)), mlp(ops::global_max_pool(feature))));
}

DeformConv2d::DeformConv2d(int in_channels, int out_channels, int kernel)
    : offset_conv_(in_channels, 2 * kernel * kernel, 3, 1, 1, true, ParamInit::Zero) {
  add_child("offset", offset_conv_);
  weight_ = add_parameter("weight", {out_channels, in_channels, kernel, kernel}, ParamInit::Normal);
  bias_ = add_parameter("bias", {out_channels}, ParamInit::Zero);
}

Var DeformConv2d::offsets(const Var& x) const { return offset_conv_.forward(x); }

Var DeformConv2d::forward(const Var& x) const { return deformable_conv(x, offsets(x), weight_, bias_); }

WarpBlock::WarpBlock(int channels) : deform_(channels, channels), refine_(channels, channels, 3) {
  add_child("deform", deform_);
  add_child("refine", refine_);
}

Var WarpBlock::forward(const Var& x) const {
  Var h = norm_relu(deform_.forward(x));
  return norm_relu(refine_.forward(h));
}

SemanticTransform::SemanticTransform(const GeneratorConfig& cfg)
    : aerial_feature_size_(cfg.aerial_feature_size()),
      channels_(cfg.feature_channels),
      grid_(build_polar_grid(cfg.aerial_feature_size(), cfg.feature_height(), cfg.feature_width())) {
  for (int i = 0; i < cfg.num_classes; ++i) {
    attention_.push_back(std::make_unique<ChannelAttention>(cfg.feature_channels, cfg.attention_reduction));
    add_child("attention" + std::to_string(i), *attention_.back());
  }
  for (int i = 0; i < cfg.num_classes; ++i) {
    warp_.push_back(std::make_unique<WarpBlock>(cfg.feature_channels));
    add_child("warp" + std::to_string(i), *warp_.back());
  }
}

Var SemanticTransform::polar_align(const Var& aerial_feature) const {
  require_image(aerial_feature, channels_, aerial_feature_size_, aerial_feature_size_, "semantic transform");
  return bilinear_sample(aerial_feature, grid_);
}

Var SemanticTransform::attention(const Var& polar_feature, int class_index) const {
  if (class_index < 0 || class_index >= num_classes()) throw InvalidArgument("attention: class index out of range");
  return attention_[static_cast<std::size_t>(class_index)]->forward(polar_feature);
}

BranchOutputs SemanticTransform::forward(const Var& aerial_feature) const {
  BranchOutputs out;
  out.polar = polar_align(aerial_feature);
  for (int i = 0; i < num_classes(); ++i) {
    Var gate = attention(out.polar, i);
    Var gated = ops::mul_channel(out.polar, gate);
    out.gates.push_back(gate);
    out.per_class.push_back(warp_[static_cast<std::size_t>(i)]->forward(gated));
  }
  out.fused = out.per_class.size() == 1 ? out.per_class.front() : ops::add_n(out.per_class);
  return out;
}

Decoder::Decoder(const GeneratorConfig& cfg)
    : feature_channels_(cfg.feature_channels),
      feature_height_(cfg.feature_height()),
      feature_width_(cfg.feature_width()),
      up1_(cfg.feature_channels, 2 * cfg.base_channels, 3, 2, 1, 1),
      up2_(2 * cfg.base_channels, cfg.base_channels, 3, 2, 1, 1),
      out_(cfg.base_channels, 3, 7) {
  for (int i = 0; i < cfg.decoder_blocks; ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock>(cfg.feature_channels));
    add_child("block" + std::to_string(i), *blocks_.back());
  }
  add_child("up1", up1_);
  add_child("up2", up2_);
  add_child("out", out_);
}

Var Decoder::forward(const Var& feature) const {
  require_image(feature, feature_channels_, feature_height_, feature_width_, "decoder");
  Var h = feature;
  for (const auto& b : blocks_) h = b->forward(h);
  h = norm_relu(up1_.forward(h));
  h = norm_relu(up2_.forward(h));
  return ops::tanh(out_.forward(h));
}

Generator::Generator(const GeneratorConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      aerial_encoder(cfg, cfg.aerial_size, cfg.aerial_size),
      transform(cfg),
      decoder(cfg),
      ground_encoder(cfg, cfg.ground_height, cfg.ground_width) {
  add_child("aerial_encoder", aerial_encoder);
  add_child("transform", transform);
  add_child("decoder", decoder);
  add_child("ground_encoder", ground_encoder);
}

SynthesisOutputs Generator::synthesize(const Var& aerial) const {
  SynthesisOutputs out;
  out.aerial_feature = aerial_encoder.forward(aerial);
  out.branches = transform.forward(out.aerial_feature);
  out.image = decoder.forward(out.branches.fused);
  return out;
}

Discriminator::Discriminator(const GeneratorConfig& cfg)
    : height_(cfg.ground_height),
      width_(cfg.ground_width),
      c1_(3, cfg.discriminator_channels, 4, 2, 1),
      c2_(cfg.discriminator_channels, 2 * cfg.discriminator_channels, 4, 2, 1),
      c3_(2 * cfg.discriminator_channels, 4 * cfg.discriminator_channels, 4, 2, 1),
      c4_(4 * cfg.discriminator_channels, 8 * cfg.discriminator_channels, 4, 2, 1),
      score_(8 * cfg.discriminator_channels, 1, 3, 1, 1) {
  add_child("c1", c1_);
  add_child("c2", c2_);
  add_child("c3", c3_);
  add_child("c4", c4_);
  add_child("score", score_);
}

Var Discriminator::logits(const Var& image) const {
  require_image(image, 3, height_, width_, "discriminator");
  Var h = ops::leaky_relu(c1_.forward(image), 0.2f);
  h = ops::leaky_relu(ops::instance_norm(c2_.forward(h)), 0.2f);
  h = ops::leaky_relu(ops::instance_norm(c3_.forward(h)), 0.2f);
  h = ops::leaky_relu(ops::instance_norm(c4_.forward(h)), 0.2f);
  return score_.forward(h);
}

Var Discriminator::probabilities(const Var& image) const { return ops::sigmoid(logits(image)); }

std::string to_string(SegmenterArch arch) { return arch == SegmenterArch::SegNet ? "segnet" : "tiny"; }

SegmenterArch parse_segmenter_arch(const std::string& name) {
  if (name == "segnet") return SegmenterArch::SegNet;
  if (name == "tiny") return SegmenterArch::Tiny;
  throw ConfigurationError("unknown segmenter architecture '" + name + "' (expected segnet or tiny)");
}

Segmenter::Segmenter(const SegmenterConfig& cfg) : cfg_(cfg) {
  const int s = cfg.channels;
  auto conv = [this](int in, int out, int k) {
    convs_.push_back(std::make_unique<Conv2d>(in, out, k));
    add_child("conv" + std::to_string(convs_.size() - 1), *convs_.back());
  };
  if (cfg.arch == SegmenterArch::SegNet) {
    conv(3, s, 3);
    conv(s, s, 3);
    conv(s, 2 * s, 3);
    conv(2 * s, 2 * s, 3);
    conv(2 * s, s, 3);
    conv(s, s, 3);
    conv(s, cfg.num_classes, 3);
  } else {
    conv(3, s, 3);
    conv(s, s, 3);
    conv(s, cfg.num_classes, 1);
  }
}

Var Segmenter::logits(const Var& image) const {
  if (image.shape().size() != 4 || image.dim(1) != 3) throw ShapeError("segmenter: expected N x 3 x H x W");
  auto c = [this](std::size_t i, const Var& x) { return convs_[i]->forward(x); };
  if (cfg_.arch == SegmenterArch::Tiny) {
    Var h = ops::relu(c(0, image));
    h = ops::relu(c(1, h));
    return c(2, h);
  }
  const int h0 = image.dim(2), w0 = image.dim(3);
  if (h0 % 4 != 0 || w0 % 4 != 0) throw ShapeError("segmenter: spatial size must be a multiple of 4");
  // Encoder-decoder with pooling-index unpooling.
  Var h = norm_relu(c(0, image));
  h = norm_relu(c(1, h));
  auto p1 = ops::max_pool2x2(h);
  h = norm_relu(c(2, p1.output));
  h = norm_relu(c(3, h));
  auto p2 = ops::max_pool2x2(h);
  h = ops::max_unpool2x2(p2.output, p2.indices, h0 / 2, w0 / 2);
  h = norm_relu(c(4, h));
  h = ops::max_unpool2x2(h, p1.indices, h0, w0);
  h = norm_relu(c(5, h));
  return c(6, h);
}

Var Segmenter::segment(const Var& image) const {
  if (!frozen_) throw ConfigurationError("segmenter: no trained checkpoint loaded (segment requires a frozen model)");
  return ops::softmax_channels(logits(image));
}

void Segmenter::freeze() {
  set_requires_grad(false);
  zero_grad();
  frozen_ = true;
}

Classifier::Classifier(const ClassifierConfig& cfg)
    : cfg_(cfg),
      c1_(3, cfg.channels, 3, 2, 1),
      c2_(cfg.channels, 2 * cfg.channels, 3, 2, 1),
      c3_(2 * cfg.channels, 4 * cfg.channels, 3, 2, 1),
      head_(4 * cfg.channels, cfg.num_categories) {
  add_child("c1", c1_);
  add_child("c2", c2_);
  add_child("c3", c3_);
  add_child("head", head_);
}

Var Classifier::logits(const Var& image) const {
  if (image.shape().size() != 4 || image.dim(1) != 3) throw ShapeError("classifier: expected N x 3 x H x W");
  Var h = ops::relu(c1_.forward(image));
  h = ops::relu(c2_.forward(h));
  h = ops::relu(c3_.forward(h));
  return head_.forward(ops::global_avg_pool(h));
}

Var Classifier::probabilities(const Var& image) const {
  if (!frozen_) throw ConfigurationError("classifier: no trained checkpoint loaded");
  Var z = logits(image);
  const int n = z.dim(0), k = z.dim(1);
  return ops::reshape(ops::softmax_channels(ops::reshape(z, {n, k, 1, 1})), {n, k});
}

void Classifier::freeze() {
  set_requires_grad(false);
  zero_grad();
  frozen_ = true;
}

}  // namespace xview
