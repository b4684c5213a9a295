#include "xview/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "xview/error.hpp"

namespace xview {

using nlohmann::json;

namespace {

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <class T, class Member>
Field field(std::string key, Member member) {
  return {std::move(key), [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const json& v) { member(c) = v.get<T>(); }};
}

#define XVIEW_FIELD(T, key, expr) field<T>(key, [](RunConfig& c) -> T& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v{
        XVIEW_FIELD(float, "train.learning_rate", c.train.learning_rate),
        XVIEW_FIELD(float, "train.adam_beta1", c.train.adam_beta1),
        XVIEW_FIELD(float, "train.adam_beta2", c.train.adam_beta2),
        XVIEW_FIELD(int, "train.epochs", c.train.epochs),
        XVIEW_FIELD(int, "train.batch_size", c.train.batch_size),
        XVIEW_FIELD(float, "train.init_std", c.train.init_std),
        XVIEW_FIELD(std::uint64_t, "train.seed", c.train.seed),
        XVIEW_FIELD(std::vector<float>, "loss.class_weights", c.loss.class_weights),
        XVIEW_FIELD(float, "loss.lambda_syn", c.loss.lambda_syn),
        XVIEW_FIELD(float, "loss.lambda_fea", c.loss.lambda_fea),
        XVIEW_FIELD(float, "loss.lambda_sem", c.loss.lambda_sem),
        XVIEW_FIELD(float, "loss.lambda_ae", c.loss.lambda_ae),
        XVIEW_FIELD(int, "generator.num_classes", c.generator.num_classes),
        XVIEW_FIELD(int, "generator.encoder_blocks", c.generator.encoder_blocks),
        XVIEW_FIELD(int, "generator.decoder_blocks", c.generator.decoder_blocks),
        XVIEW_FIELD(int, "generator.base_channels", c.generator.base_channels),
        XVIEW_FIELD(int, "generator.feature_channels", c.generator.feature_channels),
        XVIEW_FIELD(int, "generator.downsample_factor", c.generator.downsample_factor),
        XVIEW_FIELD(int, "generator.attention_reduction", c.generator.attention_reduction),
        XVIEW_FIELD(int, "generator.discriminator_channels", c.generator.discriminator_channels),
        XVIEW_FIELD(int, "generator.aerial_size", c.generator.aerial_size),
        XVIEW_FIELD(int, "generator.ground_height", c.generator.ground_height),
        XVIEW_FIELD(int, "generator.ground_width", c.generator.ground_width),
        XVIEW_FIELD(std::string, "data.root", c.data.root),
        XVIEW_FIELD(bool, "data.synthetic", c.data.synthetic),
        XVIEW_FIELD(int, "data.pairs", c.data.pairs),
        XVIEW_FIELD(std::uint64_t, "data.synthetic_seed", c.data.synthetic_seed),
        XVIEW_FIELD(std::string, "probes.segmenter", c.probes.segmenter),
        XVIEW_FIELD(std::string, "probes.classifier", c.probes.classifier),
        XVIEW_FIELD(std::string, "output.root", c.output_root),
        XVIEW_FIELD(int, "eval.is_splits", c.is_splits),
    };
    v.push_back({"train.mask_source", [](const RunConfig& c) { return json(to_string(c.train.mask_source)); },
                 [](RunConfig& c, const json& j) { c.train.mask_source = parse_mask_source(j.get<std::string>()); }});
    return v;
  }();
  return f;
}

#undef XVIEW_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::string key_list() {
  std::string s;
  for (const auto& k : RunConfig::keys()) s += "\n  " + k;
  return s;
}

[[noreturn]] void unknown_key(const std::string& key) {
  throw ConfigurationError("unknown configuration key '" + key + "'; valid keys:" + key_list());
}

void assign(RunConfig& c, const Field& f, const json& value) {
  try {
    f.set(c, value);
  } catch (const json::exception& e) {
    throw ConfigurationError("bad value for '" + f.key + "': " + e.what());
  }
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

std::string RunConfig::to_json() const {
  json j = json::object();
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    j[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(*this);
  }
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigurationError("configuration is not a JSON object");
  RunConfig c;
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) unknown_key(section);
    for (const auto& [name, value] : body.items()) {
      const std::string key = section + "." + name;
      const Field* f = find_field(key);
      if (!f) unknown_key(key);
      assign(c, *f, value);
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigurationError("cannot read configuration " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << to_json() << '\n';
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) unknown_key(key);
  // Strings are taken verbatim; everything else is parsed as JSON.
  const json current = f->get(*this);
  json parsed;
  if (current.is_string()) {
    parsed = value;
  } else {
    parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) throw ConfigurationError("bad value for '" + key + "': " + value);
  }
  assign(*this, *f, parsed);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigurationError("override must look like key=value, got '" + assignment + "'");
  }
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void RunConfig::validate() const {
  train.validate();
  generator.validate();
  loss.validate(generator.num_classes);
  if (data.pairs < 1) throw ConfigurationError("data.pairs must be >= 1");
  if (is_splits < 1) throw ConfigurationError("eval.is_splits must be >= 1");
}

}  // namespace xview
