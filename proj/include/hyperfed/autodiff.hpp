#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hyperfed/tensor.hpp"

namespace hyperfed {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape has not been reset.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Reverse-mode autodiff tape. One tape per training context; no global graph
// state, so independent clients can run on separate threads.
template <typename T>
class Tape {
 public:
  // Receives the gradient of the loss w.r.t. the node's output. Implementations
  // push contributions into parents through accumulate_grad().
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // New leaf holding a copy of v's value with the graph cut behind it.
  Var<T> detach(Var<T> v);

  // Runs reverse accumulation from a scalar loss. Every requires_grad leaf
  // afterwards holds dLoss/dLeaf (zero when unreachable).
  void backward(Var<T> loss);

  // Gradient of the last backward pass. Zero-filled for untouched nodes.
  Tensor<T> grad(Var<T> v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  // Checks every recorded value (and gradient, after backward) for NaN/Inf.
  void check_finite() const;

  // --- op-author interface ---
  const Tensor<T>& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents,
                BackwardFn backward);

  // Adds `g` into the gradient buffer of `id` if that node requires grad.
  void accumulate_grad(std::uint32_t id, const Tensor<T>& g);
  // Mutable gradient buffer (zero-initialized on first access).
  Tensor<T>& grad_buffer(std::uint32_t id);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// ---------------------------------------------------------------------------
// Differentiable operations. All record onto the tape of their first argument.

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> add_scalar(Var<T> a, T offset);
// a * s where s is a one-element Var (learned step sizes).
template <typename T>
Var<T> mul_by_scalar_var(Var<T> a, Var<T> s);
template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
// Contiguous range [offset, offset+count) of the flattened input, as 1-D.
template <typename T>
Var<T> slice(Var<T> a, std::size_t offset, std::size_t count);

// Cross-correlation. input [N,C,H,W], kernel [O,C,kH,kW], bias [O].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, std::size_t stride,
              std::size_t padding);

// x [N,in] -> x W^T + b with W [out,in], b [out]. A 1-D x is treated as N=1
// and the result is 1-D.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

// sum((a - anchor)^2) against a constant anchor tensor.
template <typename T>
Var<T> squared_distance(Var<T> a, const Tensor<T>& anchor);

// y = op(x) for a linear operator with known adjoint. The backward pass
// applies `adjoint` to the incoming gradient.
template <typename T>
using LinearMap = std::function<Tensor<T>(const Tensor<T>&)>;
template <typename T>
Var<T> apply_linear(Var<T> x, const LinearMap<T>& op, const LinearMap<T>& adjoint);

}  // namespace hyperfed
