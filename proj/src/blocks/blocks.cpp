#include "swisenet/blocks.hpp"

#include <cmath>
#include <sstream>

namespace swisenet {

namespace {

template <typename T>
std::int64_t size_of(const Parameter<T>* p) { return p ? static_cast<std::int64_t>(p->value.size()) : 0; }

template <typename T>
Parameter<T>* add_beta(ParameterStore<T>& store, const std::string& name) {
  return &store.add(name, Tensor<T>::scalar(T{1}));
}

template <typename T>
Var<T> hidden(Var<T> x, HiddenActivation kind, double alpha, Parameter<T>* beta) {
  if (kind == HiddenActivation::Relu) return ops::relu(x);
  return ops::swish_relu(x, alpha, x.tape().parameter(*beta));
}

void check_reduction(int channels, int reduction, const char* what) {
  if (channels <= 0) throw ArgumentError(std::string(what) + " channels must be positive");
  if (reduction <= 0 || channels % reduction != 0) {
    throw ArgumentError(std::string(what) + " reduction " + std::to_string(reduction) + " must divide channels " +
                        std::to_string(channels));
  }
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0,1], got " + std::to_string(alpha));
}

}  // namespace

HiddenActivation hidden_activation_from_string(std::string_view name) {
  if (name == "swish_relu") return HiddenActivation::SwishRelu;
  if (name == "relu") return HiddenActivation::Relu;
  throw ArgumentError("unknown hidden activation '" + std::string(name) + "' (expected swish_relu|relu)");
}

std::string_view to_string(HiddenActivation a) { return a == HiddenActivation::Relu ? "relu" : "swish_relu"; }

std::string stage_order_to_string(const ConvSEStageOrder& order) {
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out += ',';
    switch (order[i]) {
      case ConvSEStage::Conv: out += "conv"; break;
      case ConvSEStage::SE: out += "se"; break;
      case ConvSEStage::ChannelAttention: out += "ca"; break;
      case ConvSEStage::Activation: out += "act"; break;
    }
  }
  return out;
}

ConvSEStageOrder stage_order_from_string(std::string_view text) {
  ConvSEStageOrder order{};
  std::array<bool, 4> seen{};
  std::stringstream ss{std::string(text)};
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    if (n >= 4) throw ArgumentError("stage order has more than four entries: " + std::string(text));
    ConvSEStage s;
    if (item == "conv") s = ConvSEStage::Conv;
    else if (item == "se") s = ConvSEStage::SE;
    else if (item == "ca") s = ConvSEStage::ChannelAttention;
    else if (item == "act") s = ConvSEStage::Activation;
    else throw ArgumentError("unknown Conv_SE stage '" + item + "'");
    if (seen[static_cast<std::size_t>(s)]) throw ArgumentError("duplicate Conv_SE stage '" + item + "'");
    seen[static_cast<std::size_t>(s)] = true;
    order[n++] = s;
  }
  if (n != 4) throw ArgumentError("stage order must list conv, se, ca and act exactly once");
  return order;
}

void ConvBlockConfig::validate() const {
  if (in_channels <= 0 || out_channels <= 0) throw ArgumentError("conv block channels must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ArgumentError("conv block kernel must be odd, got " + std::to_string(kernel));
  if (stride <= 0) throw ArgumentError("conv block stride must be positive");
  check_alpha(alpha);
}

void SEBlockConfig::validate() const {
  check_reduction(channels, reduction, "SE");
  check_alpha(alpha);
}

void ChannelAttentionConfig::validate() const {
  check_reduction(channels, reduction, "channel attention");
  check_alpha(alpha);
}

void ConvSEBlockConfig::validate() const {
  conv.validate();
  se.validate();
  ca.validate();
  if (se.channels != conv.out_channels || ca.channels != conv.out_channels) {
    throw ArgumentError("Conv_SE sub-blocks disagree on channel count");
  }
}

template <typename T>
Tensor<T> he_uniform(Rng& rng, Shape shape, std::int64_t fan_in) {
  Tensor<T> t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

// ---------------------------------------------------------------- ConvBlock

template <typename T>
ConvBlock<T>::ConvBlock(const std::string& prefix, const ConvBlockConfig& cfg, ParameterStore<T>& store, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const std::int64_t k = cfg.kernel, in = cfg.in_channels, out = cfg.out_channels;
  kernel_ = &store.add(prefix + ".conv.kernel", he_uniform<T>(rng, Shape{k, k, in, out}, k * k * in));
  bias_ = &store.add(prefix + ".conv.bias", Tensor<T>(Shape{out}));
  if (cfg.use_batchnorm) {
    bn_gamma_ = &store.add(prefix + ".bn.gamma", Tensor<T>::filled(Shape{out}, T{1}));
    bn_beta_ = &store.add(prefix + ".bn.beta", Tensor<T>(Shape{out}));
    bn_mean_ = &store.add(prefix + ".bn.moving_mean", Tensor<T>(Shape{out}), false);
    bn_var_ = &store.add(prefix + ".bn.moving_variance", Tensor<T>::filled(Shape{out}, T{1}), false);
  }
  act_beta_ = add_beta(store, prefix + ".act.beta");
}

template <typename T>
Var<T> ConvBlock<T>::forward(Var<T> x, const ForwardContext& ctx) const {
  Tape<T>& tape = x.tape();
  Var<T> y = ops::conv2d(x, tape.parameter(*kernel_), tape.parameter(*bias_), cfg_.stride, cfg_.padding);
  if (cfg_.use_batchnorm) {
    BatchNormOptions opts;
    opts.training = ctx.training;
    opts.update_running_stats = ctx.update_running_stats;
    opts.momentum = cfg_.bn_momentum;
    opts.epsilon = cfg_.bn_epsilon;
    y = ops::batch_norm(y, tape.parameter(*bn_gamma_), tape.parameter(*bn_beta_), *bn_mean_, *bn_var_, opts);
  }
  return ops::swish_relu(y, cfg_.alpha, tape.parameter(*act_beta_));
}

template <typename T>
Shape ConvBlock<T>::output_shape(const Shape& in) const {
  if (in.rank() != 4 || in[3] != cfg_.in_channels) {
    throw ShapeError("conv block expects (N,H,W," + std::to_string(cfg_.in_channels) + "), got " + in.str());
  }
  return Shape{in[0], conv_output_size(in[1], cfg_.kernel, cfg_.stride, cfg_.padding),
               conv_output_size(in[2], cfg_.kernel, cfg_.stride, cfg_.padding), cfg_.out_channels};
}

template <typename T>
ParamCount ConvBlock<T>::param_count() const {
  ParamCount c;
  c.trainable_weights = size_of(kernel_) + size_of(bias_) + size_of(bn_gamma_) + size_of(bn_beta_);
  c.weights = c.trainable_weights + size_of(bn_mean_) + size_of(bn_var_);
  c.activation = size_of(act_beta_);
  return c;
}

// ---------------------------------------------------------------- SEBlock

template <typename T>
SEBlock<T>::SEBlock(const std::string& prefix, const SEBlockConfig& cfg, ParameterStore<T>& store, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const std::int64_t c = cfg.channels, h = cfg.channels / cfg.reduction;
  fc1_w_ = &store.add(prefix + ".fc1.weight", he_uniform<T>(rng, Shape{c, h}, c));
  fc1_b_ = &store.add(prefix + ".fc1.bias", Tensor<T>(Shape{h}));
  if (cfg.hidden == HiddenActivation::SwishRelu) act_beta_ = add_beta(store, prefix + ".act.beta");
  fc2_w_ = &store.add(prefix + ".fc2.weight", he_uniform<T>(rng, Shape{h, c}, h));
  fc2_b_ = &store.add(prefix + ".fc2.bias", Tensor<T>(Shape{c}));
}

template <typename T>
Var<T> SEBlock<T>::gates(Var<T> x) const {
  if (x.shape().rank() != 4 || x.shape()[3] != cfg_.channels) {
    throw ArgumentError("SE block expects " + std::to_string(cfg_.channels) + " channels, got " + x.shape().str());
  }
  Tape<T>& tape = x.tape();
  Var<T> squeezed = ops::global_avg_pool(x);
  Var<T> h = ops::dense(squeezed, tape.parameter(*fc1_w_), tape.parameter(*fc1_b_));
  h = hidden(h, cfg_.hidden, cfg_.alpha, act_beta_);
  return ops::sigmoid(ops::dense(h, tape.parameter(*fc2_w_), tape.parameter(*fc2_b_)));
}

template <typename T>
Var<T> SEBlock<T>::forward(Var<T> x) const {
  return ops::scale_channels(x, gates(x));
}

template <typename T>
ParamCount SEBlock<T>::param_count() const {
  ParamCount c;
  c.weights = c.trainable_weights = size_of(fc1_w_) + size_of(fc1_b_) + size_of(fc2_w_) + size_of(fc2_b_);
  c.activation = size_of(act_beta_);
  return c;
}

// -------------------------------------------------------- ChannelAttention

template <typename T>
ChannelAttention<T>::ChannelAttention(const std::string& prefix, const ChannelAttentionConfig& cfg,
                                      ParameterStore<T>& store, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const std::int64_t c = cfg.channels, h = cfg.channels / cfg.reduction;
  w0_ = &store.add(prefix + ".mlp0.weight", he_uniform<T>(rng, Shape{c, h}, c));
  b0_ = &store.add(prefix + ".mlp0.bias", Tensor<T>(Shape{h}));
  if (cfg.hidden == HiddenActivation::SwishRelu) act_beta_ = add_beta(store, prefix + ".act.beta");
  w1_ = &store.add(prefix + ".mlp1.weight", he_uniform<T>(rng, Shape{h, c}, h));
  b1_ = &store.add(prefix + ".mlp1.bias", Tensor<T>(Shape{c}));
}

template <typename T>
Var<T> ChannelAttention<T>::mlp(Var<T> descriptor) const {
  Tape<T>& tape = descriptor.tape();
  Var<T> h = ops::dense(descriptor, tape.parameter(*w0_), tape.parameter(*b0_));
  h = hidden(h, cfg_.hidden, cfg_.alpha, act_beta_);
  return ops::dense(h, tape.parameter(*w1_), tape.parameter(*b1_));
}

template <typename T>
Var<T> ChannelAttention<T>::gates(Var<T> x) const {
  if (x.shape().rank() != 4 || x.shape()[3] != cfg_.channels) {
    throw ArgumentError("channel attention expects " + std::to_string(cfg_.channels) + " channels, got " +
                        x.shape().str());
  }
  Var<T> avg = mlp(ops::global_avg_pool(x));
  Var<T> mx = mlp(ops::global_max_pool(x));
  return ops::sigmoid(ops::add(avg, mx));
}

template <typename T>
Var<T> ChannelAttention<T>::forward(Var<T> x) const {
  return ops::scale_channels(x, gates(x));
}

template <typename T>
ParamCount ChannelAttention<T>::param_count() const {
  ParamCount c;
  c.weights = c.trainable_weights = size_of(w0_) + size_of(b0_) + size_of(w1_) + size_of(b1_);
  c.activation = size_of(act_beta_);
  return c;
}

// -------------------------------------------------------------- ConvSEBlock

template <typename T>
ConvSEBlock<T>::ConvSEBlock(const std::string& prefix, const ConvSEBlockConfig& cfg, ParameterStore<T>& store,
                            Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      conv_(prefix + ".conv_block", cfg.conv, store, rng),
      se_(prefix + ".se", cfg.se, store, rng),
      ca_(prefix + ".ca", cfg.ca, store, rng),
      act_beta_(add_beta(store, prefix + ".act.beta")) {}

template <typename T>
Var<T> ConvSEBlock<T>::forward(Var<T> x, const ForwardContext& ctx) const {
  for (ConvSEStage stage : cfg_.order) {
    switch (stage) {
      case ConvSEStage::Conv: x = conv_.forward(x, ctx); break;
      case ConvSEStage::SE: x = se_.forward(x); break;
      case ConvSEStage::ChannelAttention: x = ca_.forward(x); break;
      case ConvSEStage::Activation: x = ops::swish_relu(x, cfg_.conv.alpha, x.tape().parameter(*act_beta_)); break;
    }
  }
  return x;
}

template <typename T>
Shape ConvSEBlock<T>::output_shape(const Shape& in) const {
  return conv_.output_shape(in);
}

template <typename T>
ParamCount ConvSEBlock<T>::param_count() const {
  ParamCount c = conv_.param_count();
  c += se_.param_count();
  c += ca_.param_count();
  c.activation += size_of(act_beta_);
  return c;
}

template Tensor<float> he_uniform<float>(Rng&, Shape, std::int64_t);
template Tensor<double> he_uniform<double>(Rng&, Shape, std::int64_t);
template class ConvBlock<float>;
template class ConvBlock<double>;
template class SEBlock<float>;
template class SEBlock<double>;
template class ChannelAttention<float>;
template class ChannelAttention<double>;
template class ConvSEBlock<float>;
template class ConvSEBlock<double>;

}  // namespace swisenet
