#include "hyperfed/adam.hpp"

#include <cmath>
#include <string>

namespace hyperfed {

template <typename T>
AdamState<T> make_adam_state(double learning_rate, double beta1, double beta2,
                             double epsilon) {
  if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be > 0");
  AdamState<T> state;
  state.learning_rate = learning_rate;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = epsilon;
  return state;
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape(), T{0});
      state.second_moment.emplace_back(p.shape(), T{0});
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step");
    require_same_shape(params[i], state.first_moment[i], "adam_step");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T one_minus_b1 = static_cast<T>(1.0 - state.beta1);
  const T one_minus_b2 = static_cast<T>(1.0 - state.beta2);
  const T step = static_cast<T>(state.learning_rate / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(state.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].raw();
    const T* g = grads[i].raw();
    T* m = state.first_moment[i].raw();
    T* v = state.second_moment[i].raw();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = b1 * m[j] + one_minus_b1 * g[j];
      v[j] = b2 * v[j] + one_minus_b2 * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template AdamState<float> make_adam_state<float>(double, double, double, double);
template AdamState<double> make_adam_state<double>(double, double, double, double);
template void adam_step<float>(std::span<Tensor<float>>, std::span<const Tensor<float>>,
                               AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>>, std::span<const Tensor<double>>,
                                AdamState<double>&);

}  // namespace hyperfed
