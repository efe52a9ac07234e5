#include "swisenet/model.hpp"

#include <cstdio>
#include <functional>
#include <map>

#include "swisenet/keyvalue.hpp"

namespace swisenet {

namespace {

std::string with_commas(std::int64_t v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return v < 0 ? "-" + out : out;
}

ConvSEBlockConfig block_config(const ModelConfig& cfg, int in, int out) {
  ConvSEBlockConfig b;
  b.conv.in_channels = in;
  b.conv.out_channels = out;
  b.conv.kernel = cfg.block_kernel;
  b.conv.stride = 1;
  b.conv.padding = Padding::Same;
  b.conv.use_batchnorm = cfg.use_batchnorm;
  b.conv.alpha = cfg.alpha;
  b.conv.bn_momentum = cfg.bn_momentum;
  b.conv.bn_epsilon = cfg.bn_epsilon;
  b.se = SEBlockConfig{out, cfg.se_reduction, cfg.alpha, cfg.hidden_activation};
  b.ca = ChannelAttentionConfig{out, cfg.ca_reduction, cfg.alpha, cfg.hidden_activation};
  b.order = cfg.stage_order;
  return b;
}

ConvBlockConfig stem_config(const ModelConfig& cfg) {
  ConvBlockConfig s;
  s.in_channels = cfg.input_channels;
  s.out_channels = cfg.stem_channels;
  s.kernel = cfg.stem_kernel;
  s.stride = cfg.stem_stride;
  s.padding = Padding::Same;
  s.use_batchnorm = cfg.use_batchnorm;
  s.alpha = cfg.alpha;
  s.bn_momentum = cfg.bn_momentum;
  s.bn_epsilon = cfg.bn_epsilon;
  return s;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelConfig ModelConfig::reduced() {
  ModelConfig c;
  c.input_size = 64;
  c.stem_channels = 8;
  c.block_channels = {8, 8, 16, 16, 16, 32, 32};
  c.se_reduction = 4;
  c.ca_reduction = 4;
  return c;
}

void ModelConfig::validate() const {
  if (input_size < 8) {
    throw ArgumentError("input size " + std::to_string(input_size) + " is too small for the stem and pooling (< 8)");
  }
  if (input_channels <= 0) throw ArgumentError("input channels must be positive");
  if (class_names.size() < 2) throw ArgumentError("at least two classes are required");
  if (stem_channels <= 0 || stem_kernel <= 0 || stem_stride <= 0) throw ArgumentError("bad stem configuration");
  if (pool_size <= 0 || pool_stride <= 0) throw ArgumentError("bad pooling configuration");
  const auto stem_out = conv_output_size(input_size, stem_kernel, stem_stride, Padding::Same);
  if (stem_out < pool_size) {
    throw ArgumentError("input size " + std::to_string(input_size) + " leaves no room for " +
                        std::to_string(pool_size) + "x" + std::to_string(pool_size) + " pooling");
  }
  if (block_channels.empty()) throw ArgumentError("at least one Conv_SE block is required");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0,1]");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ArgumentError("batch-norm momentum must lie in [0,1)");
  if (!(bn_epsilon > 0.0)) throw ArgumentError("batch-norm epsilon must be positive");
  stem_config(*this).validate();
  int in = stem_channels;
  for (int out : block_channels) {
    block_config(*this, in, out).validate();
    in = out;
  }
}

std::string ModelConfig::canonical() const {
  std::string s;
  auto put = [&](const char* key, const std::string& value) { s += std::string(key) + "=" + value + "\n"; };
  put("input_size", std::to_string(input_size));
  put("input_channels", std::to_string(input_channels));
  put("class_names", join(class_names));
  put("stem_channels", std::to_string(stem_channels));
  put("stem_kernel", std::to_string(stem_kernel));
  put("stem_stride", std::to_string(stem_stride));
  put("pool_size", std::to_string(pool_size));
  put("pool_stride", std::to_string(pool_stride));
  put("block_channels", join(block_channels));
  put("block_kernel", std::to_string(block_kernel));
  put("se_reduction", std::to_string(se_reduction));
  put("ca_reduction", std::to_string(ca_reduction));
  put("alpha", format_double(alpha));
  put("batchnorm", use_batchnorm ? "true" : "false");
  put("bn_momentum", format_double(bn_momentum));
  put("bn_epsilon", format_double(bn_epsilon));
  put("hidden_activation", std::string(to_string(hidden_activation)));
  put("stage_order", stage_order_to_string(stage_order));
  return s;
}

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig c;
  std::map<std::string, std::function<void(const KeyValue&)>> setters{
      {"input_size", [&](const KeyValue& kv) { c.input_size = static_cast<int>(parse_int(kv)); }},
      {"input_channels", [&](const KeyValue& kv) { c.input_channels = static_cast<int>(parse_int(kv)); }},
      {"class_names", [&](const KeyValue& kv) { c.class_names = parse_list(kv); }},
      {"stem_channels", [&](const KeyValue& kv) { c.stem_channels = static_cast<int>(parse_int(kv)); }},
      {"stem_kernel", [&](const KeyValue& kv) { c.stem_kernel = static_cast<int>(parse_int(kv)); }},
      {"stem_stride", [&](const KeyValue& kv) { c.stem_stride = static_cast<int>(parse_int(kv)); }},
      {"pool_size", [&](const KeyValue& kv) { c.pool_size = static_cast<int>(parse_int(kv)); }},
      {"pool_stride", [&](const KeyValue& kv) { c.pool_stride = static_cast<int>(parse_int(kv)); }},
      {"block_channels", [&](const KeyValue& kv) { c.block_channels = parse_int_list(kv); }},
      {"block_kernel", [&](const KeyValue& kv) { c.block_kernel = static_cast<int>(parse_int(kv)); }},
      {"se_reduction", [&](const KeyValue& kv) { c.se_reduction = static_cast<int>(parse_int(kv)); }},
      {"ca_reduction", [&](const KeyValue& kv) { c.ca_reduction = static_cast<int>(parse_int(kv)); }},
      {"alpha", [&](const KeyValue& kv) { c.alpha = parse_double(kv); }},
      {"batchnorm", [&](const KeyValue& kv) { c.use_batchnorm = parse_bool(kv); }},
      {"bn_momentum", [&](const KeyValue& kv) { c.bn_momentum = parse_double(kv); }},
      {"bn_epsilon", [&](const KeyValue& kv) { c.bn_epsilon = parse_double(kv); }},
      {"hidden_activation",
       [&](const KeyValue& kv) {
         try {
           c.hidden_activation = hidden_activation_from_string(kv.value);
         } catch (const ArgumentError& e) {
           throw ConfigError(e.what());
         }
       }},
      {"stage_order",
       [&](const KeyValue& kv) {
         try {
           c.stage_order = stage_order_from_string(kv.value);
         } catch (const ArgumentError& e) {
           throw ConfigError(e.what());
         }
       }},
  };
  for (const auto& kv : parse_key_values(text)) {
    auto it = setters.find(kv.key);
    if (it == setters.end()) throw ConfigError("unknown model key '" + kv.key + "'");
    it->second(kv);
  }
  return c;
}

std::uint64_t ModelConfig::digest() const { return fnv1a(canonical()); }

std::string SummaryRow::shape_str() const {
  std::string s = "(None";
  for (auto d : output_shape) s += "," + std::to_string(d);
  return s + ")";
}

std::string ModelSummary::render() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-22s %12s %12s\n", "Layer/Block", "Output Shape", "Param#", "Swish beta");
  out += line;
  out += std::string(73, '-') + "\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %-22s %12lld %12lld\n", r.name.c_str(), r.shape_str().c_str(),
                  static_cast<long long>(r.param_total()), static_cast<long long>(r.params.activation));
    out += line;
  }
  out += std::string(73, '-') + "\n";
  out += "Total params: " + with_commas(totals.total()) + " (layer weights " + with_commas(totals.weights) +
         ", swish betas " + with_commas(totals.activation) + ")\n";
  out += "Trainable params: " + with_commas(totals.trainable()) + "\n";
  out += "Non-trainable params: " + with_commas(totals.total() - totals.trainable()) + "\n";
  out += "Published reference (total trainable params): " + with_commas(kReferenceTrainableParams) + "\n";
  return out;
}

template <typename T>
SwiSENet<T>::SwiSENet(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  stem_ = std::make_unique<ConvBlock<T>>("conv_block_1", stem_config(cfg_), params_, rng);
  int in = cfg_.stem_channels;
  for (std::size_t i = 0; i < cfg_.block_channels.size(); ++i) {
    const int out = cfg_.block_channels[i];
    blocks_.push_back(std::make_unique<ConvSEBlock<T>>("conv_se_block_" + std::to_string(i + 1),
                                                       block_config(cfg_, in, out), params_, rng));
    in = out;
  }
  const std::int64_t k = cfg_.num_classes();
  dense_w_ = &params_.add("dense.weight", he_uniform<T>(rng, Shape{in, k}, in));
  dense_b_ = &params_.add("dense.bias", Tensor<T>(Shape{k}));
}

template <typename T>
Var<T> SwiSENet<T>::forward(Var<T> batch, const ForwardContext& ctx) const {
  const Shape& s = batch.shape();
  if (s.rank() != 4 || s[1] != cfg_.input_size || s[2] != cfg_.input_size || s[3] != cfg_.input_channels) {
    throw ShapeError("model expects (N," + std::to_string(cfg_.input_size) + "," + std::to_string(cfg_.input_size) +
                     "," + std::to_string(cfg_.input_channels) + ") input, got " + s.str());
  }
  Var<T> x = stem_->forward(batch, ctx);
  x = ops::maxpool2d(x, cfg_.pool_size, cfg_.pool_stride);
  for (const auto& b : blocks_) x = b->forward(x, ctx);
  x = ops::global_avg_pool(x);
  Tape<T>& tape = x.tape();
  return ops::dense(x, tape.parameter(*dense_w_), tape.parameter(*dense_b_));
}

template <typename T>
Tensor<T> SwiSENet<T>::infer(const Tensor<T>& batch) const {
  Tape<T> tape(false);
  return forward(tape.constant(batch), ForwardContext{}).value();
}

template <typename T>
ModelSummary SwiSENet<T>::summarize() const {
  ModelSummary s;
  const std::int64_t in = cfg_.input_size;
  const std::int64_t stem = conv_output_size(in, cfg_.stem_kernel, cfg_.stem_stride, Padding::Same);
  const std::int64_t pooled = pool_output_size(stem, cfg_.pool_size, cfg_.pool_stride);
  s.rows.push_back({"ConvBlock_1", LayerKind::ConvBlock, {stem, stem, cfg_.stem_channels}, stem_->param_count()});
  s.rows.push_back({"MaxPooling_1", LayerKind::MaxPool, {pooled, pooled, cfg_.stem_channels}, {}});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    s.rows.push_back({"ConvSEBlock_" + std::to_string(i + 1), LayerKind::ConvSEBlock,
                      {pooled, pooled, cfg_.block_channels[i]}, blocks_[i]->param_count()});
  }
  s.rows.push_back({"GlobalAveragePooling_1", LayerKind::GlobalAvgPool, {cfg_.block_channels.back()}, {}});
  ParamCount dense;
  dense.weights = dense.trainable_weights =
      static_cast<std::int64_t>(dense_w_->value.size() + dense_b_->value.size());
  s.rows.push_back({"Dense", LayerKind::Dense, {cfg_.num_classes()}, dense});
  for (const auto& r : s.rows) s.totals += r.params;
  return s;
}

template class SwiSENet<float>;
template class SwiSENet<double>;

}  // namespace swisenet
