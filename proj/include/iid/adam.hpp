#ifndef IID_ADAM_HPP_
#define IID_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "iid/tensor.hpp"

namespace iid {

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
struct AdamState {
  TensorT<T> m, v;  // first/second moment accumulators
};

// Single bias-corrected moment update; `step` counts from 1.
template <typename T>
void adam_step(TensorT<T>& param, const TensorT<T>& grad, AdamState<T>& state, int64_t step,
               const AdamConfig<T>& cfg) {
  if (!(cfg.lr > T(0))) throw std::invalid_argument("adam: lr must be positive");
  check_same_shape(param, grad, "adam_step");
  if (state.m.empty()) {
    state.m = TensorT<T>(param.channels, param.height, param.width);
    state.v = TensorT<T>(param.channels, param.height, param.width);
  }
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg.beta1), step));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg.beta2), step));
  for (size_t i = 0; i < param.data.size(); ++i) {
    const T g = grad.data[i];
    state.m.data[i] = cfg.beta1 * state.m.data[i] + (T(1) - cfg.beta1) * g;
    state.v.data[i] = cfg.beta2 * state.v.data[i] + (T(1) - cfg.beta2) * g * g;
    const T m_hat = state.m.data[i] / bc1;
    const T v_hat = state.v.data[i] / bc2;
    param.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

// Keyed state for a whole parameter store.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

  void begin_step() { ++step_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  void update(const std::string& name, TensorT<T>& param, const TensorT<T>& grad) {
    adam_step(param, grad, states_[name], step_, cfg_);
  }

  std::map<std::string, AdamState<T>>& states() { return states_; }
  const AdamConfig<T>& config() const { return cfg_; }

 private:
  AdamConfig<T> cfg_;
  std::map<std::string, AdamState<T>> states_;
  int64_t step_ = 0;
};

}  // namespace iid

#endif  // IID_ADAM_HPP_
