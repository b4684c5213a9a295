#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xview/checkpoint.hpp"
#include "xview/config.hpp"
#include "xview/data.hpp"
#include "xview/error.hpp"
#include "xview/image_io.hpp"
#include "xview/metrics.hpp"
#include "xview/probes.hpp"
#include "xview/training.hpp"

namespace fs = std::filesystem;
using namespace xview;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr const char* kConfigFile = "config.json";

// Options shared by every command that builds a RunConfig.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--set", overrides, "Override a configuration key (key=value), repeatable");
  }

  RunConfig build(RunConfig base = {}) const {
    RunConfig cfg = config_path.empty() ? std::move(base) : RunConfig::load(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    return cfg;
  }
};

fs::path output_root(const RunConfig& cfg) {
  if (!cfg.output_root.empty()) return cfg.output_root;
  if (const char* env = std::getenv("XVIEW_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

fs::path unique_run_dir(const fs::path& root) {
  const std::string base = "run-" + timestamp();
  fs::path dir = root / base;
  for (int k = 1; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  return dir;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

PairProvider training_data(const RunConfig& cfg, Split split) {
  if (cfg.data.synthetic) {
    auto pairs = std::make_shared<std::vector<ScenePair>>(generate_synthetic_set(
        static_cast<std::size_t>(cfg.data.pairs), cfg.data.synthetic_seed + (split == Split::Test ? 1000003 : 0),
        cfg.sizes()));
    return PairProvider::from_pairs(std::move(pairs));
  }
  if (cfg.data.root.empty()) throw ConfigurationError("no dataset: pass --data DIR or --synthetic");
  return PairProvider::from_manifest(load_manifest(cfg.data.root, split), cfg.sizes());
}

// Walks up from a checkpoint directory to the nearest config.json.
RunConfig checkpoint_config(const fs::path& checkpoint) {
  if (!fs::is_directory(checkpoint) || !fs::exists(checkpoint / TensorArchive::kManifestFile)) {
    throw ConfigurationError("checkpoint not found: " + checkpoint.string());
  }
  for (fs::path p = fs::absolute(checkpoint); !p.empty(); p = p.parent_path()) {
    if (fs::exists(p / kConfigFile)) return RunConfig::load(p / kConfigFile);
    if (p == p.parent_path()) break;
  }
  throw ConfigurationError("no " + std::string(kConfigFile) + " found alongside checkpoint " + checkpoint.string());
}

std::unique_ptr<Generator> load_trained_generator(const fs::path& checkpoint, RunConfig& cfg) {
  cfg = checkpoint_config(checkpoint);
  auto gen = std::make_unique<Generator>(cfg.generator);
  load_generator(checkpoint, *gen);
  gen->set_requires_grad(false);
  return gen;
}

Tensor synthesize_one(const Generator& gen, const Tensor& aerial) {
  NoGradGuard guard;
  const Tensor out = gen.synthesize(Var::leaf(aerial.reshaped({1, 3, aerial.dim(1), aerial.dim(2)}))).image.value();
  return out.reshaped({3, out.dim(2), out.dim(3)});
}

// Aerial (resized to the panorama height) left of the panorama.
Image8 gallery_sheet(const Tensor& aerial, const Tensor& panorama) {
  const int h = panorama.dim(1), w = panorama.dim(2);
  const Image8 a = from_signed_tensor(resize_bilinear(aerial, h, h));
  const Image8 p = from_signed_tensor(panorama);
  Image8 sheet{h + w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(h + w) * h * 3, 0)};
  for (int y = 0; y < h; ++y) {
    std::copy_n(a.pixels.begin() + static_cast<std::ptrdiff_t>(y) * h * 3, h * 3,
                sheet.pixels.begin() + static_cast<std::ptrdiff_t>(y) * (h + w) * 3);
    std::copy_n(p.pixels.begin() + static_cast<std::ptrdiff_t>(y) * w * 3, w * 3,
                sheet.pixels.begin() + (static_cast<std::ptrdiff_t>(y) * (h + w) + h) * 3);
  }
  return sheet;
}

std::shared_ptr<Segmenter> fit_segmenter(const PairProvider& data, const fs::path& out, std::uint64_t seed,
                                         std::ostream* progress) {
  auto seg = std::make_shared<Segmenter>(SegmenterConfig{SegmenterArch::Tiny, 8, kNumClasses});
  ProbeTrainConfig pc;
  pc.seed = seed;
  train_segmenter(*seg, data, pc, progress);
  save_segmenter(out, *seg);
  return seg;
}

// ---- synth-data -------------------------------------------------------------

struct SynthDataArgs {
  ConfigArgs config;
  int count = 8;
  std::uint64_t seed = 1;
  std::string out;
  std::string split = "train";
};

int cmd_synth_data(const SynthDataArgs& a) {
  const RunConfig cfg = a.config.build();
  cfg.generator.validate();
  if (a.count < 1) throw ConfigurationError("--count must be >= 1");
  const Split split = parse_split(a.split);
  write_dataset(a.out, split, generate_synthetic_set(static_cast<std::size_t>(a.count), a.seed, cfg.sizes()));
  std::cout << "wrote " << a.count << " synthetic pairs to " << (fs::path(a.out) / to_string(split)).string() << '\n';
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  ConfigArgs config;
  bool synthetic = false;
  std::optional<int> pairs, epochs, batch;
  std::optional<std::uint64_t> seed;
  std::string data, segmenter, out, run_name, resume;
  long max_steps = -1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.config.build(a.resume.empty() ? RunConfig{} : checkpoint_config(a.resume));
  if (a.synthetic) cfg.data.synthetic = true;
  if (a.pairs) cfg.data.pairs = *a.pairs;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch) cfg.train.batch_size = *a.batch;
  if (a.seed) cfg.train.seed = *a.seed;
  if (!a.data.empty()) cfg.data.root = a.data;
  if (!a.segmenter.empty()) cfg.probes.segmenter = a.segmenter;
  if (!a.out.empty()) cfg.output_root = a.out;
  cfg.validate();

  fs::path run_dir;
  if (!a.resume.empty()) {
    // Resume writes into the run that owns the checkpoint (<run>/checkpoints/epoch_N).
    run_dir = fs::absolute(a.resume).parent_path().parent_path();
  } else {
    const fs::path root = output_root(cfg);
    run_dir = a.run_name.empty() ? unique_run_dir(root) : root / a.run_name;
  }
  make_dirs(run_dir);

  const PairProvider data = training_data(cfg, Split::Train);
  std::ostream* progress = a.quiet ? nullptr : &std::cout;
  std::shared_ptr<const Segmenter> seg;
  if (!cfg.probes.segmenter.empty()) {
    seg = load_segmenter(cfg.probes.segmenter);
  } else {
    std::cerr << "warning: no segmenter checkpoint configured; fitting a desk-scale segmenter on the training masks\n";
    const fs::path seg_dir = run_dir / "segmenter";
    seg = fit_segmenter(data, seg_dir, cfg.train.seed, nullptr);
    cfg.probes.segmenter = fs::absolute(seg_dir).string();
  }
  cfg.save(run_dir / kConfigFile);

  Trainer trainer(cfg.generator, cfg.loss, cfg.train, seg);
  LoopOptions opts;
  opts.run_dir = run_dir;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  opts.max_steps = a.max_steps;
  opts.progress = progress;
  opts.on_checkpoint = [&cfg](const fs::path& dir) { cfg.save(dir / kConfigFile); };
  const LoopResult r = train_loop(data, trainer, cfg.train, opts);
  std::cout << "run directory: " << run_dir.string() << "\n"
            << "epochs completed: " << r.epochs_completed << ", steps: " << r.steps << '\n';
  return 0;
}

// ---- synthesize ---------------------------------------------------------------

struct SynthesizeArgs {
  std::string checkpoint, input, out;
};

int cmd_synthesize(const SynthesizeArgs& a) {
  RunConfig cfg;
  const auto gen = load_trained_generator(a.checkpoint, cfg);
  if (!fs::is_directory(a.input)) throw DatasetLayoutError("input directory not found: " + a.input);
  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(a.input)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".PNG" || ext == ".JPG")) {
      inputs.push_back(e.path());
    }
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw EmptyDatasetError("no aerial images in " + a.input);
  make_dirs(a.out);
  for (const auto& path : inputs) {
    const Tensor aerial = preprocess_aerial(to_unit_tensor(read_rgb8(path)), cfg.generator.aerial_size);
    const Tensor pano = synthesize_one(*gen, aerial);
    const std::string stem = path.stem().string();
    write_png(fs::path(a.out) / (stem + ".png"), from_signed_tensor(pano));
    write_png(fs::path(a.out) / (stem + "_sheet.png"), gallery_sheet(aerial, pano));
  }
  std::cout << "synthesized " << inputs.size() << " panoramas into " << a.out << '\n';
  return 0;
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  ConfigArgs config;
  std::string checkpoint, data, split = "test", segmenter, classifier, out;
  bool synthetic = false, identity = false;
  int pairs = 8;
  std::uint64_t seed = 1;
  int is_splits = 1;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg;
  std::unique_ptr<Generator> gen;
  if (a.identity) {
    cfg = a.config.build(a.checkpoint.empty() ? RunConfig{} : checkpoint_config(a.checkpoint));
  } else {
    if (a.checkpoint.empty()) throw ConfigurationError("--checkpoint is required unless --identity is given");
    gen = load_trained_generator(a.checkpoint, cfg);
    const GeneratorConfig trained = cfg.generator;
    cfg = a.config.build(cfg);
    if (!(cfg.generator == trained)) {
      throw ConfigurationError("generator.* cannot be overridden when evaluating a checkpoint");
    }
  }
  if (a.synthetic) {
    cfg.data.synthetic = true;
    cfg.data.pairs = a.pairs;
    cfg.data.synthetic_seed = a.seed;
  }
  if (!a.data.empty()) cfg.data.root = a.data;
  const Split split = parse_split(a.split);
  const PairProvider data = training_data(cfg, split);

  std::unique_ptr<Segmenter> seg;
  std::unique_ptr<Classifier> cls;
  const std::string seg_path = !a.segmenter.empty() ? a.segmenter : cfg.probes.segmenter;
  const std::string cls_path = !a.classifier.empty() ? a.classifier : cfg.probes.classifier;
  if (!seg_path.empty()) seg = load_segmenter(seg_path);
  if (!cls_path.empty()) cls = load_classifier(cls_path);
  if (!seg || !cls) {
    std::cerr << "warning: missing probe(s):" << (seg ? "" : " segmenter") << (cls ? "" : " classifier")
              << "; computing psnr, ssim, sd" << (seg ? ", miou" : "")
              << (cls ? ", inception score, top-k accuracy, kl" : "") << " only\n";
  }

  std::function<Tensor(const ScenePair&)> fake_for;
  if (a.identity) {
    fake_for = [](const ScenePair& p) { return p.ground; };
  } else {
    fake_for = [&gen](const ScenePair& p) { return synthesize_one(*gen, p.aerial); };
  }
  const EvalReport report = evaluate(data, fake_for, seg.get(), cls.get(), {a.is_splits});
  std::cout << report.table();
  if (!a.out.empty()) {
    make_dirs(a.out);
    std::ofstream kv(fs::path(a.out) / "eval.txt");
    std::ofstream table(fs::path(a.out) / "eval_table.txt");
    if (!kv || !table) throw IoError("cannot write evaluation report into " + a.out);
    kv << report.key_values();
    table << report.table();
  }
  return 0;
}

// ---- seg-train ------------------------------------------------------------------

struct SegTrainArgs {
  ConfigArgs config;
  std::string data, out, classifier_out, arch = "tiny";
  bool synthetic = false;
  int pairs = 8, channels = 8, epochs = -1;
  std::uint64_t seed = 1;
};

int cmd_seg_train(const SegTrainArgs& a) {
  RunConfig cfg = a.config.build();
  cfg.data.synthetic = a.synthetic;
  cfg.data.pairs = a.pairs;
  cfg.data.synthetic_seed = a.seed;
  if (!a.data.empty()) cfg.data.root = a.data;
  const PairProvider data = training_data(cfg, Split::Train);
  ProbeTrainConfig pc;
  pc.seed = a.seed;
  if (a.epochs > 0) pc.epochs = a.epochs;

  Segmenter seg(SegmenterConfig{parse_segmenter_arch(a.arch), a.channels, cfg.generator.num_classes});
  const double loss = train_segmenter(seg, data, pc, &std::cout);
  save_segmenter(a.out, seg);
  std::cout << "segmenter saved to " << a.out << " (final loss " << loss << ")\n";
  if (!a.classifier_out.empty()) {
    Classifier cls(ClassifierConfig{});
    const double closs = train_classifier(cls, data, pc, &std::cout);
    save_classifier(a.classifier_out, cls);
    std::cout << "classifier saved to " << a.classifier_out << " (final loss " << closs << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aerial-to-ground panorama synthesis"};
  app.require_subcommand(1);

  SynthDataArgs sd;
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic polar-consistent dataset");
  sd.config.attach(*synth);
  synth->add_option("--count", sd.count, "Number of pairs")->capture_default_str();
  synth->add_option("--seed", sd.seed, "Base seed")->capture_default_str();
  synth->add_option("--out", sd.out, "Dataset root")->required();
  synth->add_option("--split", sd.split, "train or test")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the generator and discriminator");
  tr.config.attach(*train);
  train->add_flag("--synthetic", tr.synthetic, "Train on generated synthetic pairs");
  train->add_option("--pairs", tr.pairs, "Synthetic pair count");
  train->add_option("--epochs", tr.epochs, "Epochs");
  train->add_option("--batch-size", tr.batch, "Batch size");
  train->add_option("--seed", tr.seed, "Training seed");
  train->add_option("--data", tr.data, "Dataset root with train/ and test/");
  train->add_option("--segmenter", tr.segmenter, "Frozen segmenter checkpoint");
  train->add_option("--out", tr.out, "Output root (default $XVIEW_OUTPUT_ROOT or ./runs)");
  train->add_option("--run-name", tr.run_name, "Run directory name (default: timestamped)");
  train->add_option("--resume", tr.resume, "Resume from a checkpoint directory");
  train->add_option("--max-steps", tr.max_steps, "Stop after this many total steps");
  train->add_flag("--quiet", tr.quiet, "No per-step progress lines");

  SynthesizeArgs sy;
  auto* synthesize = app.add_subcommand("synthesize", "Synthesize ground panoramas from aerial images");
  synthesize->add_option("--checkpoint", sy.checkpoint, "Training checkpoint directory")->required();
  synthesize->add_option("--input", sy.input, "Directory of aerial images")->required();
  synthesize->add_option("--out", sy.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
  ev.config.attach(*eval);
  eval->add_option("--checkpoint", ev.checkpoint, "Training checkpoint directory");
  eval->add_option("--data", ev.data, "Dataset root");
  eval->add_option("--split", ev.split, "Split to evaluate")->capture_default_str();
  eval->add_flag("--synthetic", ev.synthetic, "Evaluate on generated synthetic pairs");
  eval->add_option("--pairs", ev.pairs, "Synthetic pair count")->capture_default_str();
  eval->add_option("--seed", ev.seed, "Synthetic seed")->capture_default_str();
  eval->add_option("--segmenter", ev.segmenter, "Segmenter probe checkpoint");
  eval->add_option("--classifier", ev.classifier, "Classifier probe checkpoint");
  eval->add_option("--is-splits", ev.is_splits, "Inception score splits")->capture_default_str();
  eval->add_flag("--identity", ev.identity, "Score the real ground images as the fakes");
  eval->add_option("--out", ev.out, "Directory for eval.txt and eval_table.txt");

  SegTrainArgs st;
  auto* seg = app.add_subcommand("seg-train", "Train the desk-scale segmenter probe on dataset masks");
  st.config.attach(*seg);
  seg->add_option("--data", st.data, "Dataset root");
  seg->add_flag("--synthetic", st.synthetic, "Use generated synthetic pairs");
  seg->add_option("--pairs", st.pairs, "Synthetic pair count")->capture_default_str();
  seg->add_option("--seed", st.seed, "Seed")->capture_default_str();
  seg->add_option("--arch", st.arch, "tiny or segnet")->capture_default_str();
  seg->add_option("--channels", st.channels, "Base width")->capture_default_str();
  seg->add_option("--epochs", st.epochs, "Epochs (default from probe config)");
  seg->add_option("--out", st.out, "Segmenter checkpoint directory")->required();
  seg->add_option("--classifier", st.classifier_out, "Also train the classifier probe into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth_data(sd);
    if (*train) return cmd_train(tr);
    if (*synthesize) return cmd_synthesize(sy);
    if (*eval) return cmd_eval(ev);
    if (*seg) return cmd_seg_train(st);
  } catch (const ConfigurationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
