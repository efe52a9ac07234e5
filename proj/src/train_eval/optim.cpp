#include "swisenet/optim.hpp"

#include <cmath>

namespace swisenet {

void OptimizerConfig::validate() const {
  if (kind != "adam" && kind != "sgd") throw ArgumentError("unknown optimizer '" + kind + "' (expected adam or sgd)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ArgumentError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ArgumentError("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
}

template <typename T>
void check_finite_grads(const ParameterStore<T>& params) {
  for (const auto* p : params.all()) {
    if (!p->trainable || p->grad.empty()) continue;
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
  }
}

namespace {

template <typename T>
NamedArray to_array(const std::string& name, const Tensor<T>& t) {
  NamedArray a{name, t.shape(), {}};
  a.values.reserve(t.size());
  for (T v : t.vec()) a.values.push_back(static_cast<float>(v));
  return a;
}

template <typename T>
Tensor<T> from_array(const NamedArray& a) {
  std::vector<T> v(a.values.begin(), a.values.end());
  return Tensor<T>(a.shape, std::move(v));
}

void expect_kind(const OptimizerState& state, const std::string& kind) {
  if (state.kind != kind) {
    throw CheckpointError(CheckpointErrorKind::Malformed,
                          "optimizer state is for '" + state.kind + "', run uses '" + kind + "'");
  }
}

}  // namespace

template <typename T>
void Sgd<T>::step(ParameterStore<T>& params) {
  check_finite_grads(params);
  for (auto* p : params.all()) {
    if (!p->trainable || p->grad.empty()) continue;
    auto& w = p->value.vec();
    const auto& g = p->grad.vec();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(w[i] - lr_ * g[i]);
  }
  ++t_;
}

template <typename T>
OptimizerState Sgd<T>::export_state() const {
  return {"sgd", t_, {}};
}

template <typename T>
void Sgd<T>::import_state(const OptimizerState& state, const ParameterStore<T>&) {
  expect_kind(state, "sgd");
  t_ = state.step;
}

template <typename T>
Adam<T>::Adam(const OptimizerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& params) {
  check_finite_grads(params);
  ++t_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto* p : params.all()) {
    if (!p->trainable || p->grad.empty()) continue;
    auto it = slots_.find(p->name);
    if (it == slots_.end()) {
      order_.push_back(p->name);
      it = slots_.emplace(p->name, Moments{Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())}).first;
    }
    auto& m = it->second.m.vec();
    auto& v = it->second.v.vec();
    auto& w = p->value.vec();
    const auto& g = p->grad.vec();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<T>(w[i] - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
  }
}

template <typename T>
OptimizerState Adam<T>::export_state() const {
  OptimizerState s{"adam", t_, {}};
  for (const auto& name : order_) {
    const auto& slot = slots_.at(name);
    s.slots.push_back(to_array("m/" + name, slot.m));
    s.slots.push_back(to_array("v/" + name, slot.v));
  }
  return s;
}

template <typename T>
void Adam<T>::import_state(const OptimizerState& state, const ParameterStore<T>& params) {
  expect_kind(state, "adam");
  if (state.slots.size() % 2 != 0) throw CheckpointError(CheckpointErrorKind::Malformed, "odd number of adam slots");
  std::vector<std::string> order;
  std::unordered_map<std::string, Moments> slots;
  for (std::size_t i = 0; i < state.slots.size(); i += 2) {
    const auto& m = state.slots[i];
    const auto& v = state.slots[i + 1];
    if (!m.name.starts_with("m/") || v.name != "v/" + m.name.substr(2)) {
      throw CheckpointError(CheckpointErrorKind::Malformed, "unexpected adam slot pair '" + m.name + "', '" + v.name + "'");
    }
    const std::string name = m.name.substr(2);
    const auto* p = params.find(name);
    if (!p || !p->trainable) {
      throw CheckpointError(CheckpointErrorKind::Malformed, "adam slot for unknown parameter '" + name + "'");
    }
    if (m.shape != p->value.shape() || v.shape != p->value.shape()) {
      throw CheckpointError(CheckpointErrorKind::Malformed, "adam slot shape mismatch for '" + name + "'");
    }
    order.push_back(name);
    slots.emplace(name, Moments{from_array<T>(m), from_array<T>(v)});
  }
  t_ = state.step;
  order_ = std::move(order);
  slots_ = std::move(slots);
}

template <typename T>
const Tensor<T>* Adam<T>::first_moment(std::string_view name) const {
  const auto it = slots_.find(std::string(name));
  return it == slots_.end() ? nullptr : &it->second.m;
}

template <typename T>
const Tensor<T>* Adam<T>::second_moment(std::string_view name) const {
  const auto it = slots_.find(std::string(name));
  return it == slots_.end() ? nullptr : &it->second.v;
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const OptimizerConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "sgd") return std::make_unique<Sgd<T>>(cfg.learning_rate);
  return std::make_unique<Adam<T>>(cfg);
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;
template std::unique_ptr<Optimizer<float>> make_optimizer<float>(const OptimizerConfig&);
template std::unique_ptr<Optimizer<double>> make_optimizer<double>(const OptimizerConfig&);
template void check_finite_grads<float>(const ParameterStore<float>&);
template void check_finite_grads<double>(const ParameterStore<double>&);

}  // namespace swisenet
