#include "swisenet/autograd.hpp"

#include <array>
#include <atomic>
#include <utility>

namespace swisenet {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 17> kOpNames{{
    {OpKind::Constant, "constant"},
    {OpKind::Parameter, "parameter"},
    {OpKind::Conv2d, "conv2d"},
    {OpKind::MaxPool2d, "maxpool2d"},
    {OpKind::GlobalAvgPool, "global_avg_pool"},
    {OpKind::GlobalMaxPool, "global_max_pool"},
    {OpKind::Dense, "dense"},
    {OpKind::Relu, "relu"},
    {OpKind::Sigmoid, "sigmoid"},
    {OpKind::Swish, "swish"},
    {OpKind::SwishRelu, "swish_relu"},
    {OpKind::BatchNorm, "batch_norm"},
    {OpKind::ChannelScale, "channel_scale"},
    {OpKind::Add, "add"},
    {OpKind::Mul, "mul"},
    {OpKind::Sum, "sum"},
    {OpKind::SoftmaxCrossEntropy, "softmax_cross_entropy"},
}};

std::atomic<int> g_fault{-1};

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

void set_backward_fault(std::optional<OpKind> kind) {
  g_fault.store(kind ? static_cast<int>(*kind) : -1);
}

std::optional<OpKind> backward_fault() {
  const int f = g_fault.load();
  if (f < 0) return std::nullopt;
  return static_cast<OpKind>(f);
}

// ---------------------------------------------------------------------------
// ParameterStore

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> value, bool trainable) {
  if (index_.count(name)) {
    throw ArgumentError("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, params_.size());
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->grad = Tensor<T>(value.shape());
  p->value = std::move(value);
  p->trainable = trainable;
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::all() {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ParameterStore<T>::all() const {
  std::vector<const Parameter<T>*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
std::int64_t ParameterStore<T>::count(bool trainable_only) const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (!trainable_only || p->trainable) n += static_cast<std::int64_t>(p->value.size());
  }
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.shape() != p->value.shape()) {
      p->grad = Tensor<T>(p->value.shape());
    } else {
      p->grad.fill(T{0});
    }
  }
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.kind = OpKind::Parameter;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward) {
  const NodeId self = nodes_.size();
  for (NodeId in : inputs) {
    if (in >= self) throw ArgumentError("tape input does not precede its output");
  }
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  if (requires_grad_) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var<T>(this, self);
}

template <typename T>
const Tensor<T>& Tape<T>::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.param ? n.param->value : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (&loss.tape() != this) throw ArgumentError("loss belongs to a different tape");
  if (!requires_grad_) throw ArgumentError("backward() on a tape recorded without gradients");
  if (value(loss.id()).size() != 1) {
    throw ArgumentError("backward() needs a scalar loss, got shape " + value(loss.id()).shape().str());
  }
  for (auto& n : nodes_) {
    if (!n.grad.empty()) n.grad.fill(T{0});
  }
  grad(loss.id())[0] = T{1};
  const auto fault = backward_fault();

  for (NodeId i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.param) {
      Parameter<T>& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
      if (!n.grad.empty()) {
        for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
      }
      continue;
    }
    if (n.grad.empty() || !n.backward) continue;
    if (fault && *fault == n.kind) {
      for (auto& g : n.grad.vec()) g *= T{2};
    }
    n.backward(*this, i);
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace swisenet
