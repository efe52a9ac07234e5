#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "swisenet/blocks.hpp"

namespace swisenet {

inline constexpr std::int64_t kReferenceTrainableParams = 3'349'380;

/// Architecture description. Everything except `seed` feeds the config
/// digest stored in checkpoints.
struct ModelConfig {
  int input_size = 300;
  int input_channels = 3;
  std::vector<std::string> class_names{"bacterialblight", "blast", "brownspot", "tungro"};
  int stem_channels = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  int pool_size = 3;
  int pool_stride = 2;
  std::vector<int> block_channels{64, 64, 128, 128, 128, 256, 256};
  int block_kernel = 3;
  int se_reduction = 16;
  int ca_reduction = 16;
  double alpha = 0.5;
  bool use_batchnorm = true;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  HiddenActivation hidden_activation = HiddenActivation::SwishRelu;
  ConvSEStageOrder stage_order = kDefaultStageOrder;
  // Initialization seed; not part of the digest.
  std::uint64_t seed = 42;

  // Desk-scale preset: input 64, narrow channels, reduction 4.
  static ModelConfig reduced();

  int num_classes() const { return static_cast<int>(class_names.size()); }
  void validate() const;

  // Canonical "key=value" lines; parse(canonical()) reproduces the config.
  std::string canonical() const;
  static ModelConfig parse(std::string_view text);
  std::uint64_t digest() const;
};

enum class LayerKind { ConvBlock, MaxPool, ConvSEBlock, GlobalAvgPool, Dense };

struct SummaryRow {
  std::string name;
  LayerKind kind;
  // Output dims without the batch axis.
  std::vector<std::int64_t> output_shape;
  ParamCount params;

  std::int64_t param_total() const { return params.weights; }
  std::int64_t param_trainable() const { return params.trainable_weights; }
  // "(None,150,150,64)"
  std::string shape_str() const;
};

struct ModelSummary {
  std::vector<SummaryRow> rows;
  ParamCount totals;

  // Three-column text table plus totals and the published reference count.
  std::string render() const;
};

/// Stem ConvBlock, max pooling, seven Conv_SE blocks, global average
/// pooling and a dense head producing logits.
template <typename T>
class SwiSENet {
 public:
  explicit SwiSENet(ModelConfig cfg);

  SwiSENet(SwiSENet&&) noexcept = default;
  SwiSENet& operator=(SwiSENet&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

  // [N, S, S, C] -> [N, classes] logits. Training mode uses batch
  // statistics and updates the running ones.
  Var<T> forward(Var<T> batch, const ForwardContext& ctx) const;
  // Inference-mode logits without gradient bookkeeping.
  Tensor<T> infer(const Tensor<T>& batch) const;

  ModelSummary summarize() const;

 private:
  ModelConfig cfg_;
  ParameterStore<T> params_;
  std::unique_ptr<ConvBlock<T>> stem_;
  std::vector<std::unique_ptr<ConvSEBlock<T>>> blocks_;
  Parameter<T>* dense_w_ = nullptr;
  Parameter<T>* dense_b_ = nullptr;
};

template <typename T>
SwiSENet<T> build_swisenet(const ModelConfig& cfg) {
  return SwiSENet<T>(cfg);
}

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

extern template class SwiSENet<float>;
extern template class SwiSENet<double>;

}  // namespace swisenet
