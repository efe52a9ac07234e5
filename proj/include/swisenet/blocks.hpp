#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "swisenet/autograd.hpp"
#include "swisenet/ops.hpp"
#include "swisenet/rng.hpp"

namespace swisenet {

struct ForwardContext {
  bool training = false;
  bool update_running_stats = true;
};

// Activation used between the two dense maps of SE and channel attention.
enum class HiddenActivation { SwishRelu, Relu };

HiddenActivation hidden_activation_from_string(std::string_view name);
std::string_view to_string(HiddenActivation a);

struct ConvBlockConfig {
  int in_channels = 3;
  int out_channels = 64;
  int kernel = 3;
  int stride = 1;
  Padding padding = Padding::Same;
  bool use_batchnorm = true;
  double alpha = 0.5;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;

  void validate() const;
};

struct SEBlockConfig {
  int channels = 64;
  int reduction = 16;
  double alpha = 0.5;
  HiddenActivation hidden = HiddenActivation::SwishRelu;

  void validate() const;
};

struct ChannelAttentionConfig {
  int channels = 64;
  int reduction = 16;
  double alpha = 0.5;
  HiddenActivation hidden = HiddenActivation::SwishRelu;

  void validate() const;
};

enum class ConvSEStage { Conv, SE, ChannelAttention, Activation };

using ConvSEStageOrder = std::array<ConvSEStage, 4>;
inline constexpr ConvSEStageOrder kDefaultStageOrder{ConvSEStage::Conv, ConvSEStage::SE,
                                                      ConvSEStage::ChannelAttention, ConvSEStage::Activation};

std::string stage_order_to_string(const ConvSEStageOrder& order);
ConvSEStageOrder stage_order_from_string(std::string_view text);

struct ConvSEBlockConfig {
  ConvBlockConfig conv;
  SEBlockConfig se;
  ChannelAttentionConfig ca;
  ConvSEStageOrder order = kDefaultStageOrder;

  void validate() const;
};

// Per-block parameter tally. `weights` covers kernels, biases and batch-norm
// tensors (running statistics included); `activation` counts the swish
// beta scalars.
struct ParamCount {
  std::int64_t weights = 0;
  std::int64_t trainable_weights = 0;
  std::int64_t activation = 0;

  std::int64_t total() const { return weights + activation; }
  std::int64_t trainable() const { return trainable_weights + activation; }
  ParamCount& operator+=(const ParamCount& o) {
    weights += o.weights;
    trainable_weights += o.trainable_weights;
    activation += o.activation;
    return *this;
  }
};

/// conv2d -> batch norm (optional) -> swish_relu.
template <typename T>
class ConvBlock {
 public:
  ConvBlock(const std::string& prefix, const ConvBlockConfig& cfg, ParameterStore<T>& store, Rng& rng);

  Var<T> forward(Var<T> x, const ForwardContext& ctx) const;
  Shape output_shape(const Shape& in) const;
  ParamCount param_count() const;
  const ConvBlockConfig& config() const { return cfg_; }

 private:
  ConvBlockConfig cfg_;
  Parameter<T>* kernel_;
  Parameter<T>* bias_;
  Parameter<T>* bn_gamma_ = nullptr;
  Parameter<T>* bn_beta_ = nullptr;
  Parameter<T>* bn_mean_ = nullptr;
  Parameter<T>* bn_var_ = nullptr;
  Parameter<T>* act_beta_;
};

/// Squeeze-and-excitation: global average pool, C -> C/r -> C dense maps,
/// sigmoid gates multiplied into the channels.
template <typename T>
class SEBlock {
 public:
  SEBlock(const std::string& prefix, const SEBlockConfig& cfg, ParameterStore<T>& store, Rng& rng);

  // [N, C] gates in (0, 1).
  Var<T> gates(Var<T> x) const;
  Var<T> forward(Var<T> x) const;
  ParamCount param_count() const;

 private:
  SEBlockConfig cfg_;
  Parameter<T>* fc1_w_;
  Parameter<T>* fc1_b_;
  Parameter<T>* fc2_w_;
  Parameter<T>* fc2_b_;
  Parameter<T>* act_beta_ = nullptr;
};

/// Channel attention:
///   M_c = sigmoid(W1(W0(avg_pool(x))) + W1(W0(max_pool(x))))
/// with one shared two-layer MLP applied to both spatial descriptors.
template <typename T>
class ChannelAttention {
 public:
  ChannelAttention(const std::string& prefix, const ChannelAttentionConfig& cfg, ParameterStore<T>& store, Rng& rng);

  Var<T> gates(Var<T> x) const;
  Var<T> forward(Var<T> x) const;
  ParamCount param_count() const;

 private:
  Var<T> mlp(Var<T> descriptor) const;

  ChannelAttentionConfig cfg_;
  Parameter<T>* w0_;
  Parameter<T>* b0_;
  Parameter<T>* w1_;
  Parameter<T>* b1_;
  Parameter<T>* act_beta_ = nullptr;
};

/// ConvBlock, SE, channel attention and a closing swish_relu, applied in
/// the configured order.
template <typename T>
class ConvSEBlock {
 public:
  ConvSEBlock(const std::string& prefix, const ConvSEBlockConfig& cfg, ParameterStore<T>& store, Rng& rng);

  Var<T> forward(Var<T> x, const ForwardContext& ctx) const;
  Shape output_shape(const Shape& in) const;
  ParamCount param_count() const;
  const ConvSEBlockConfig& config() const { return cfg_; }

 private:
  ConvSEBlockConfig cfg_;
  ConvBlock<T> conv_;
  SEBlock<T> se_;
  ChannelAttention<T> ca_;
  Parameter<T>* act_beta_;
};

// He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
Tensor<T> he_uniform(Rng& rng, Shape shape, std::int64_t fan_in);

extern template class ConvBlock<float>;
extern template class ConvBlock<double>;
extern template class SEBlock<float>;
extern template class SEBlock<double>;
extern template class ChannelAttention<float>;
extern template class ChannelAttention<double>;
extern template class ConvSEBlock<float>;
extern template class ConvSEBlock<double>;

}  // namespace swisenet
