#include "xview/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "xview/checkpoint.hpp"
#include "xview/error.hpp"
#include "xview/ops.hpp"

namespace xview {

namespace fs = std::filesystem;

std::string to_string(MaskSource source) { return source == MaskSource::Segmenter ? "segmenter" : "dataset"; }

MaskSource parse_mask_source(const std::string& name) {
  if (name == "segmenter") return MaskSource::Segmenter;
  if (name == "dataset") return MaskSource::Dataset;
  throw ConfigurationError("unknown mask source '" + name + "' (expected segmenter or dataset)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0f)) throw ConfigurationError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0f && adam_beta1 < 1.0f) || !(adam_beta2 >= 0.0f && adam_beta2 < 1.0f)) {
    throw ConfigurationError("adam betas must lie in [0, 1)");
  }
  if (epochs < 1) throw ConfigurationError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigurationError("batch_size must be >= 1");
  if (!(init_std > 0.0f)) throw ConfigurationError("init_std must be positive");
}

void init_weights(Module& model, float std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, std);
  for (auto& p : model.parameters()) {
    Tensor& t = p.var.mutable_value();
    if (p.init == ParamInit::Zero) {
      t.fill(0.0f);
    } else {
      for (float& v : t.values()) v = normal(rng);
    }
  }
}

Batch make_batch(std::span<const ScenePair> pairs) {
  if (pairs.empty()) throw InvalidArgument("make_batch: empty batch");
  std::vector<Tensor> aerial, ground, mask;
  bool all_masks = true;
  for (const auto& p : pairs) {
    aerial.push_back(p.aerial);
    ground.push_back(p.ground);
    if (p.ground_mask) {
      mask.push_back(*p.ground_mask);
    } else {
      all_masks = false;
    }
  }
  Batch b{stack(aerial), stack(ground), std::nullopt};
  if (all_masks) b.mask = stack(mask);
  return b;
}

PairProvider PairProvider::from_manifest(DatasetManifest manifest, ImageSizes sizes) {
  auto m = std::make_shared<DatasetManifest>(std::move(manifest));
  return {m->pair_count, [m, sizes](std::size_t i) { return load_pair(*m, i, sizes); }};
}

PairProvider PairProvider::from_pairs(std::shared_ptr<const std::vector<ScenePair>> pairs) {
  const std::size_t n = pairs->size();
  return {n, [pairs](std::size_t i) { return pairs->at(i); }};
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::mt19937_64 rng(synthetic_pair_seed(seed ^ 0x5DEECE66Dull, static_cast<std::size_t>(epoch)));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

Trainer::Trainer(const GeneratorConfig& gen_cfg, const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                 std::shared_ptr<const Segmenter> segmenter)
    : gen_cfg_(gen_cfg), loss_cfg_(loss_cfg), train_cfg_(train_cfg), segmenter_(std::move(segmenter)) {
  gen_cfg_.validate();
  loss_cfg_.validate(gen_cfg_.num_classes);
  train_cfg_.validate();
  if (!segmenter_ || !segmenter_->frozen()) {
    throw ConfigurationError("trainer: a loaded, frozen segmenter is required");
  }
  if (segmenter_->config().num_classes != gen_cfg_.num_classes) {
    throw ConfigurationError("trainer: segmenter class count differs from the generator's");
  }
  generator_ = std::make_unique<Generator>(gen_cfg_);
  discriminator_ = std::make_unique<Discriminator>(gen_cfg_);
  init_weights(*generator_, train_cfg_.init_std, synthetic_pair_seed(train_cfg_.seed, 1));
  init_weights(*discriminator_, train_cfg_.init_std, synthetic_pair_seed(train_cfg_.seed, 2));
  gen_opt_ = std::make_unique<Adam>(generator_->parameters("G."), train_cfg_.adam());
  disc_opt_ = std::make_unique<Adam>(discriminator_->parameters("D."), train_cfg_.adam());
}

namespace {

void check_finite(const LossReport& r, long step) {
  const double parts[] = {r.syn, r.fea, r.sem, r.ae, r.adv_g, r.adv_d, r.total};
  for (double v : parts) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step << ": syn=" << r.syn << " fea=" << r.fea << " sem=" << r.sem
         << " ae=" << r.ae << " adv_g=" << r.adv_g << " adv_d=" << r.adv_d << " total=" << r.total;
      throw NumericalError(os.str());
    }
  }
}

}  // namespace

LossReport Trainer::train_step(const Batch& batch) {
  const GeneratorConfig& g = gen_cfg_;
  require_shape(batch.aerial, {batch.aerial.dim(0), 3, g.aerial_size, g.aerial_size}, "train_step aerial");
  require_shape(batch.ground, {batch.aerial.dim(0), 3, g.ground_height, g.ground_width}, "train_step ground");

  LossReport report;
  const Var aerial = Var::leaf(batch.aerial);
  const Tensor& real = batch.ground;
  const Var real_var = Var::leaf(real);

  SynthesisOutputs out = generator_->synthesize(aerial);
  const Var& fake = out.image;

  // Discriminator update on the detached fake.
  disc_opt_->zero_grad();
  {
    Var d_loss = ops::add(adversarial_bce(discriminator_->logits(real_var), true),
                          adversarial_bce(discriminator_->logits(fake.detach()), false));
    report.adv_d = d_loss.value()[0];
    if (!std::isfinite(report.adv_d)) check_finite(report, steps_ + 1);
    backward(d_loss);
    disc_opt_->step();
  }

  // Generator update.
  gen_opt_->zero_grad();
  Tensor real_soft;
  {
    NoGradGuard guard;
    real_soft = segmenter_->segment(real_var).value();
  }
  Tensor mask;
  if (train_cfg_.mask_source == MaskSource::Dataset) {
    if (!batch.mask) throw ConfigurationError("mask_source=dataset but the batch carries no ground-truth masks");
    mask = *batch.mask;
  } else {
    mask = hard_mask(real_soft);
  }
  const Var syn = semantic_synthesis_loss(real, fake, mask, loss_cfg_.class_weights, &report.per_class_syn);
  const Var f_g = generator_->encode_ground(real_var);
  const Tensor mask_down = downsample_mask(mask, g.feature_height(), g.feature_width());
  const Var fea = semantic_feature_loss(f_g.value(), out.branches.per_class, mask_down, loss_cfg_.class_weights);
  const Var sem = semantic_consistency_loss(real_soft, segmenter_->segment(fake));
  const Var ae = autoencoding_loss(real, generator_->decoder.forward(f_g));
  const Var adv_g = adversarial_bce(discriminator_->logits(fake), true);
  const Var total = ops::weighted_sum({syn, fea, sem, ae, adv_g}, {loss_cfg_.lambda_syn, loss_cfg_.lambda_fea,
                                                                   loss_cfg_.lambda_sem, loss_cfg_.lambda_ae, 1.0f});
  report.syn = syn.value()[0];
  report.fea = fea.value()[0];
  report.sem = sem.value()[0];
  report.ae = ae.value()[0];
  report.adv_g = adv_g.value()[0];
  report.total = total_loss(report, loss_cfg_);
  ++steps_;
  check_finite(report, steps_);
  backward(total);
  gen_opt_->step();
  // The generator pass also accumulated discriminator gradients; D is only stepped by its own optimizer.
  disc_opt_->zero_grad();
  gen_opt_->zero_grad();
  return report;
}

void Trainer::save(const fs::path& dir, int epochs_completed) const {
  TensorArchive archive;
  save_module(archive, *generator_, "G.");
  save_module(archive, *discriminator_, "D.");
  gen_opt_->save_state(archive, "opt_G.");
  disc_opt_->save_state(archive, "opt_D.");
  archive.put("meta.epoch", Tensor({1}, static_cast<float>(epochs_completed)));
  archive.put("meta.step", Tensor({1}, static_cast<float>(steps_)));
  archive.save(dir);
}

int Trainer::load(const fs::path& dir) {
  const TensorArchive archive = TensorArchive::load(dir);
  load_module(archive, *generator_, "G.");
  load_module(archive, *discriminator_, "D.");
  gen_opt_->load_state(archive, "opt_G.");
  disc_opt_->load_state(archive, "opt_D.");
  steps_ = static_cast<long>(archive.get("meta.step")[0]);
  return static_cast<int>(archive.get("meta.epoch")[0]);
}

void load_generator(const fs::path& dir, Generator& generator) {
  load_module(TensorArchive::load(dir), generator, "G.");
}

std::string checkpoint_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return os.str();
}

std::string loss_csv_header(int num_classes) {
  std::string h = "step,syn,fea,sem,ae,adv_g,adv_d,total";
  for (int i = 0; i < num_classes; ++i) {
    h += ",syn_";
    h += i < static_cast<int>(kClassNames.size()) ? kClassNames[static_cast<std::size_t>(i)] : std::to_string(i);
  }
  return h;
}

std::string loss_csv_row(long step, const LossReport& r) {
  std::ostringstream os;
  os << std::setprecision(9) << step << ',' << r.syn << ',' << r.fea << ',' << r.sem << ',' << r.ae << ','
     << r.adv_g << ',' << r.adv_d << ',' << r.total;
  for (double v : r.per_class_syn) os << ',' << v;
  return os.str();
}

namespace {

// Keep the header and rows with step <= last_step.
void truncate_csv(const fs::path& path, long last_step) {
  std::ifstream is(path);
  if (!is) return;
  std::vector<std::string> keep;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first) {
      keep.push_back(line);
      first = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stol(line.substr(0, line.find(','))) <= last_step) keep.push_back(line);
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : keep) os << l << '\n';
}

}  // namespace

LoopResult train_loop(const PairProvider& data, Trainer& trainer, const TrainConfig& cfg, const LoopOptions& options) {
  cfg.validate();
  if (data.count == 0) throw EmptyDatasetError("train_loop: no training pairs");
  std::error_code ec;
  const fs::path ckpt_root = options.run_dir / "checkpoints";
  fs::create_directories(ckpt_root, ec);
  if (ec) throw IoError("cannot create " + ckpt_root.string() + ": " + ec.message());

  LoopResult result;
  int start_epoch = 0;
  const fs::path csv_path = options.run_dir / kLossCsv;
  if (options.resume_from) {
    start_epoch = trainer.load(*options.resume_from);
    truncate_csv(csv_path, trainer.steps());
  }
  const bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
  std::ofstream csv(csv_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  if (fresh) csv << loss_csv_header(trainer.generator().config().num_classes) << '\n';

  result.epochs_completed = start_epoch;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.count, cfg.seed, epoch);
    bool stopped = false;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      if (options.max_steps >= 0 && trainer.steps() >= options.max_steps) {
        stopped = true;
        break;
      }
      std::vector<ScenePair> pairs;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) pairs.push_back(data.load(order[k]));
      const LossReport r = trainer.train_step(make_batch(pairs));
      csv << loss_csv_row(trainer.steps(), r) << '\n';
      csv.flush();
      if (!csv) throw IoError("write failed: " + csv_path.string());
      if (options.progress) {
        *options.progress << std::setprecision(6) << epoch + 1 << ' ' << trainer.steps() << ' ' << r.total << ' '
                          << r.syn << ' ' << r.fea << ' ' << r.sem << ' ' << r.ae << ' ' << r.adv_g << ' '
                          << r.adv_d << '\n';
      }
      result.reports.push_back(r);
    }
    if (stopped) break;
    const fs::path dir = ckpt_root / checkpoint_name(epoch + 1);
    trainer.save(dir, epoch + 1);
    if (options.on_checkpoint) options.on_checkpoint(dir);
    result.checkpoints.push_back(dir);
    result.epochs_completed = epoch + 1;
  }
  result.steps = trainer.steps();
  return result;
}

}  // namespace xview
