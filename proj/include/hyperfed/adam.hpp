#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hyperfed/tensor.hpp"

namespace hyperfed {

template <typename T>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;
};

template <typename T>
AdamState<T> make_adam_state(double learning_rate, double beta1 = 0.9,
                             double beta2 = 0.999, double epsilon = 1e-8);

// One bias-corrected Adam update over a parameter group. Moment buffers are
// allocated on the first call and must stay congruent afterwards.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state);

}  // namespace hyperfed
