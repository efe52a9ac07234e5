#include "swisenet/run_config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "swisenet/blocks.hpp"
#include "swisenet/keyvalue.hpp"

namespace swisenet {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const KeyValue&)> set;
};

Field text(const char* key, std::string RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return c.*m; }, [m](RunConfig& c, const KeyValue& kv) { c.*m = kv.value; }};
}

Field integer(const char* key, int RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m](RunConfig& c, const KeyValue& kv) {
            const auto v = parse_int(kv);
            if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("'" + kv.key + "' is out of range");
            c.*m = static_cast<int>(v);
          }};
}

Field real(const char* key, double RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return format_double(c.*m); },
          [m](RunConfig& c, const KeyValue& kv) { c.*m = parse_double(kv); }};
}

Field flag(const char* key, bool RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [m](RunConfig& c, const KeyValue& kv) { c.*m = parse_bool(kv); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      text("dataset", &RunConfig::dataset),
      text("out_dir", &RunConfig::out_dir),
      text("checkpoint", &RunConfig::checkpoint),
      text("cache_dir", &RunConfig::cache_dir),
      flag("reduced", &RunConfig::reduced),
      integer("image_size", &RunConfig::image_size),
      real("alpha", &RunConfig::alpha),
      {"class_names", [](const RunConfig& c) { return join(c.class_names); },
       [](RunConfig& c, const KeyValue& kv) { c.class_names = parse_list(kv); }},
      integer("se_reduction", &RunConfig::se_reduction),
      integer("ca_reduction", &RunConfig::ca_reduction),
      real("bn_momentum", &RunConfig::bn_momentum),
      text("hidden_activation", &RunConfig::hidden_activation),
      real("learning_rate", &RunConfig::learning_rate),
      integer("epochs", &RunConfig::epochs),
      integer("batch_size", &RunConfig::batch_size),
      text("optimizer", &RunConfig::optimizer),
      real("beta1", &RunConfig::beta1),
      real("beta2", &RunConfig::beta2),
      real("epsilon", &RunConfig::epsilon),
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const KeyValue& kv) { c.seed = parse_uint(kv); }},
      text("averaging", &RunConfig::averaging),
      real("train_fraction", &RunConfig::train_fraction),
      flag("stratified", &RunConfig::stratified),
      text("eval_split", &RunConfig::eval_split),
      integer("levels", &RunConfig::levels),
      real("sigma", &RunConfig::sigma),
      integer("radius", &RunConfig::radius),
      flag("adaptive_sigma", &RunConfig::adaptive_sigma),
      real("adaptive_sigma_scale", &RunConfig::adaptive_sigma_scale),
      text("border", &RunConfig::border),
      integer("stage_images", &RunConfig::stage_images),
      flag("strict", &RunConfig::strict),
      integer("threads", &RunConfig::threads),
      flag("plots", &RunConfig::plots),
  };
  return f;
}

// Runs `fn`, turning ArgumentError from a sub-config into a ConfigError.
template <typename Fn>
auto as_config_error(Fn&& fn) {
  try {
    return fn();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  bool versioned = false;
  for (const auto& kv : parse_key_values(text)) {
    if (kv.key == "schema_version") {
      const auto v = parse_int(kv);
      if (v != kRunConfigSchema) {
        throw ConfigError("unsupported schema_version " + std::to_string(v) + " (this build reads " +
                          std::to_string(kRunConfigSchema) + ")");
      }
      versioned = true;
      continue;
    }
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (kv.key == f.key) field = &f;
    if (!field) throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
    field->set(cfg, kv);
  }
  if (!versioned) throw ConfigError("config has no schema_version");
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return parse(s.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::render() const {
  std::string out = "schema_version = " + std::to_string(kRunConfigSchema) + "\n";
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (eval_split != "train" && eval_split != "val" && eval_split != "all") {
    throw ConfigError("eval_split must be train, val or all, got '" + eval_split + "'");
  }
  if (stage_images < 0) throw ConfigError("stage_images must be >= 0");
  if (se_reduction < 0 || ca_reduction < 0) throw ConfigError("reductions must be >= 0");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (levels < 2 || levels > 256) throw ConfigError("levels must lie in [2, 256]");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (radius < 0) throw ConfigError("radius must be >= 0");
  if (!(adaptive_sigma_scale > 0.0)) throw ConfigError("adaptive_sigma_scale must be positive");
  std::set<std::string> names;
  for (const auto& n : class_names) {
    if (!names.insert(normalize_class_name(n)).second) throw ConfigError("duplicate class name '" + n + "'");
  }
  as_config_error([&] {
    (void)averaging_from_string(averaging);
    (void)border_mode_from_string(border);
    model_config().validate();
    train_config().validate();
    split_config().validate();
    return 0;
  });
}

std::filesystem::path RunConfig::cache_path() const {
  return cache_dir.empty() ? std::filesystem::path(out_dir) / "cache" : std::filesystem::path(cache_dir);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc = reduced ? ModelConfig::reduced() : ModelConfig{};
  mc.input_size = image_size;
  mc.alpha = alpha;
  mc.class_names = class_names;
  if (se_reduction != 0) mc.se_reduction = se_reduction;
  if (ca_reduction != 0) mc.ca_reduction = ca_reduction;
  mc.bn_momentum = bn_momentum;
  mc.hidden_activation = as_config_error([&] { return hidden_activation_from_string(hidden_activation); });
  mc.seed = seed;
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.learning_rate = learning_rate;
  tc.epochs = epochs;
  tc.batch_size = batch_size;
  tc.image_size = image_size;
  tc.seed = seed;
  tc.optimizer = optimizer;
  tc.beta1 = beta1;
  tc.beta2 = beta2;
  tc.epsilon = epsilon;
  tc.alpha = alpha;
  tc.averaging = as_config_error([&] { return averaging_from_string(averaging); });
  return tc;
}

SplitConfig RunConfig::split_config() const {
  return {train_fraction, seed, stratified};
}

PreprocessConfig RunConfig::preprocess_config() const {
  PreprocessConfig pc;
  pc.target_height = pc.target_width = image_size;
  pc.levels = levels;
  pc.sigma = sigma;
  pc.radius = radius;
  pc.adaptive_sigma = adaptive_sigma;
  pc.adaptive_sigma_scale = adaptive_sigma_scale;
  pc.border = as_config_error([&] { return border_mode_from_string(border); });
  return pc;
}

}  // namespace swisenet
