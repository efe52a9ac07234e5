#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "swisenet/tensor.hpp"

namespace swisenet {

using NodeId = std::size_t;

enum class OpKind {
  Constant,
  Parameter,
  Conv2d,
  MaxPool2d,
  GlobalAvgPool,
  GlobalMaxPool,
  Dense,
  Relu,
  Sigmoid,
  Swish,
  SwishRelu,
  BatchNorm,
  ChannelScale,
  Add,
  Mul,
  Sum,
  SoftmaxCrossEntropy,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

/// Named model weight. Non-trainable parameters (batch-norm running
/// statistics) never receive optimizer updates.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Owns every Parameter of a model. Addresses are stable for the lifetime of
/// the store, so layers keep raw pointers into it.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<T>& add(std::string name, Tensor<T> value, bool trainable = true);

  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  // Parameters in registration order.
  std::vector<Parameter<T>*> all();
  std::vector<const Parameter<T>*> all() const;

  // Total scalar count, optionally restricted to trainable parameters.
  std::int64_t count(bool trainable_only = false) const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

/// Handle to a node on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Append-only record of a forward computation. Node order is topological by
/// construction; backward() walks it in reverse.
template <typename T>
class Tape {
 public:
  // Reads grad(self) and accumulates into the grads of the node's inputs.
  using BackwardFn = std::function<void(Tape&, NodeId self)>;

  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  explicit Tape(bool requires_grad = true) : requires_grad_(requires_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  // Leaf bound to a parameter; reads the parameter's value in place.
  Var<T> parameter(Parameter<T>& p);
  Var<T> record(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward);

  const Tensor<T>& value(NodeId id) const;
  // Gradient slot of a node, zero-initialized on first access.
  Tensor<T>& grad(NodeId id);
  bool has_grad(NodeId id) const { return !nodes_[id].grad.empty(); }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad() const { return requires_grad_; }

  // Branch tracking: ops with kinks (relu, max pooling) fold which branch
  // each element took into a running signature, so a caller can tell
  // whether two evaluations went through the same piecewise-smooth region.
  void track_branches(bool on) { track_branches_ = on; }
  bool tracking_branches() const { return track_branches_; }
  void note_branch(std::uint64_t v) { branch_signature_ = (branch_signature_ ^ v) * 0x100000001b3ULL; }
  std::uint64_t branch_signature() const { return branch_signature_; }

  // Seeds d(loss)/d(loss) = 1 and propagates to every node. Parameter leaves
  // accumulate into Parameter::grad; parameters on the tape that the loss
  // does not reach end up with an all-zero grad.
  void backward(Var<T> loss);

 private:
  // deque: a Var's value() reference survives later records.
  std::deque<Node> nodes_;
  bool requires_grad_;
  bool track_branches_ = false;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// Test hook: doubles the upstream gradient fed into every backward rule of
// the given kind, so verification harnesses can prove they notice.
void set_backward_fault(std::optional<OpKind> kind);
std::optional<OpKind> backward_fault();

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace swisenet
