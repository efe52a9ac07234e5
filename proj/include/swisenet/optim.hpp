#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>

#include "swisenet/autograd.hpp"
#include "swisenet/checkpoint.hpp"

namespace swisenet {

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Updates trainable parameters from their grads. Every gradient is checked
/// for NaN/Inf before anything is written, so a failed step leaves
/// parameters and state untouched.
template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  virtual void step(ParameterStore<T>& params) = 0;
  virtual std::uint64_t steps() const = 0;
  virtual OptimizerState export_state() const = 0;
  // Throws CheckpointError if kind or slot shapes disagree with `params`.
  virtual void import_state(const OptimizerState& state, const ParameterStore<T>& params) = 0;
};

// p -= lr * g.
template <typename T>
class Sgd final : public Optimizer<T> {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}

  void step(ParameterStore<T>& params) override;
  std::uint64_t steps() const override { return t_; }
  OptimizerState export_state() const override;
  void import_state(const OptimizerState& state, const ParameterStore<T>& params) override;

 private:
  double lr_;
  std::uint64_t t_ = 0;
};

/// m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
/// p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
/// Moments have the parameter's type and are stored as "m/<name>" and
/// "v/<name>"; for float models a save/load round trip is bit-exact.
template <typename T>
class Adam final : public Optimizer<T> {
 public:
  explicit Adam(const OptimizerConfig& cfg);

  void step(ParameterStore<T>& params) override;
  std::uint64_t steps() const override { return t_; }
  OptimizerState export_state() const override;
  void import_state(const OptimizerState& state, const ParameterStore<T>& params) override;

  const Tensor<T>* first_moment(std::string_view name) const;
  const Tensor<T>* second_moment(std::string_view name) const;

 private:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Moments> slots_;
};

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const OptimizerConfig& cfg);

// Throws NumericError naming the first trainable parameter whose grad holds
// a NaN or Inf.
template <typename T>
void check_finite_grads(const ParameterStore<T>& params);

extern template class Sgd<float>;
extern template class Sgd<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace swisenet
