#include "hyperfed/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <string>

namespace hyperfed {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return a.tape();
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite input");
  }
}

struct ConvDims {
  std::size_t n, c, h, w, o, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t out_plane() const { return oh * ow; }
};

// Output columns [lo, hi) whose input column ox*stride + k - pad is inside
// [0, extent).
inline void valid_range(const ConvDims& d, std::size_t k, std::size_t extent, std::size_t out,
                        std::size_t& lo, std::size_t& hi) {
  const long off = static_cast<long>(k) - static_cast<long>(d.pad);
  const long s = static_cast<long>(d.stride);
  long first = off >= 0 ? 0 : (-off + s - 1) / s;
  long last = (static_cast<long>(extent) - 1 - off);
  last = last < 0 ? -1 : last / s;
  lo = static_cast<std::size_t>(std::min<long>(first, static_cast<long>(out)));
  hi = static_cast<std::size_t>(std::clamp<long>(last + 1, static_cast<long>(lo), static_cast<long>(out)));
}

// Per-thread im2col workspace, reused across calls to avoid reallocating
// (and page-faulting) multi-megabyte buffers on every convolution.
template <typename T>
T* conv_workspace(std::size_t count) {
  thread_local AlignedVector<T> buffer;
  if (buffer.size() < count) buffer.resize(count);
  return buffer.data();
}

template <typename T>
void im2col(const T* in, const ConvDims& d, T* cols) {
  const std::size_t plane = d.out_plane();
  for (std::size_t c = 0; c < d.c; ++c) {
    const T* src = in + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.kh; ++ki) {
      std::size_t y_lo, y_hi;
      valid_range(d, ki, d.h, d.oh, y_lo, y_hi);
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        std::size_t x_lo, x_hi;
        valid_range(d, kj, d.w, d.ow, x_lo, x_hi);
        T* dst = cols + ((c * d.kh + ki) * d.kw + kj) * plane;
        std::fill(dst, dst + y_lo * d.ow, T{0});
        std::fill(dst + y_hi * d.ow, dst + plane, T{0});
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          const std::size_t y = oy * d.stride + ki - d.pad;
          T* row = dst + oy * d.ow;
          std::fill(row, row + x_lo, T{0});
          std::fill(row + x_hi, row + d.ow, T{0});
          const T* src_row = src + y * d.w;
          if (d.stride == 1) {
            std::copy(src_row + (x_lo + kj - d.pad), src_row + (x_hi + kj - d.pad), row + x_lo);
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) row[ox] = src_row[ox * d.stride + kj - d.pad];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, T* out) {
  const std::size_t plane = d.out_plane();
  for (std::size_t c = 0; c < d.c; ++c) {
    T* dst = out + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.kh; ++ki) {
      std::size_t y_lo, y_hi;
      valid_range(d, ki, d.h, d.oh, y_lo, y_hi);
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        std::size_t x_lo, x_hi;
        valid_range(d, kj, d.w, d.ow, x_lo, x_hi);
        const T* src = cols + ((c * d.kh + ki) * d.kw + kj) * plane;
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          const std::size_t y = oy * d.stride + ki - d.pad;
          T* dst_row = dst + y * d.w;
          const T* row = src + oy * d.ow;
          if (d.stride == 1) {
            T* __restrict d0 = dst_row + (x_lo + kj - d.pad);
            const T* __restrict r0 = row + x_lo;
            for (std::size_t i = 0; i < x_hi - x_lo; ++i) d0[i] += r0[i];
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) dst_row[ox * d.stride + kj - d.pad] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::detach(Var<T> v) {
  return leaf(v.value(), false);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& parents,
                       BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& p : parents) {
    if (&p.tape() != this) {
      throw ContractError("operand recorded on a different tape");
    }
    needs_grad = needs_grad || p.requires_grad();
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::uint32_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value.shape(), T{0});
    node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
void Tape<T>::accumulate_grad(std::uint32_t id, const Tensor<T>& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor<T>& buf = grad_buffer(id);
  if (buf.size() != g.size()) {
    throw DimensionError("gradient size mismatch during backward");
  }
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (&loss.tape() != this) {
    throw ContractError("backward: loss belongs to another tape");
  }
  if (backward_done_) {
    throw ContractError("backward called twice without reset");
  }
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = T{1};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad);
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& node = nodes_.at(v.id());
  if (node.has_grad) return node.grad;
  return Tensor<T>(node.value.shape(), T{0});
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  backward_done_ = false;
}

template <typename T>
void Tape<T>::check_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite() ||
        (nodes_[i].has_grad && !nodes_[i].grad.all_finite())) {
      throw NumericError("non-finite value on tape node " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate_grad(ia, g);
    t.accumulate_grad(ib, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate_grad(ia, g);
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad_buffer(ia);
      const auto& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      const auto& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T offset) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v += offset;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate_grad(ia, g);
  });
}

template <typename T>
Var<T> mul_by_scalar_var(Var<T> a, Var<T> s) {
  Tape<T>& tape = same_tape(a, s, "mul_by_scalar_var");
  if (s.value().size() != 1) {
    throw DimensionError("mul_by_scalar_var: scalar operand has shape " +
                         shape_to_string(s.shape()));
  }
  const T factor = s.value()[0];
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  const auto ia = a.id(), is = s.id();
  return tape.record(std::move(out), {a, s}, [ia, is](Tape<T>& t, const Tensor<T>& g) {
    const T factor = t.value(is)[0];
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    }
    if (t.requires_grad(is)) {
      const auto& av = t.value(ia);
      T acc{0};
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.grad_buffer(is)[0] += acc;
    }
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const auto ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    const auto& av = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] > T{0}) ga[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  const auto ia = a.id();
  return a.tape().record(Tensor<T>({1}, acc), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    for (auto& v : ga.data()) v += g[0];
  });
}

template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
  Tape<T>& tape = same_tape(pred, target, "mse_loss");
  require_same_shape(pred.value(), target.value(), "mse_loss");
  const auto& p = pred.value();
  const auto& q = target.value();
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = p[i] - q[i];
    acc += d * d;
  }
  const T n = static_cast<T>(p.size());
  const auto ip = pred.id(), it = target.id();
  return tape.record(Tensor<T>({1}, acc / n), {pred, target},
                     [ip, it, n](Tape<T>& t, const Tensor<T>& g) {
                       const auto& p = t.value(ip);
                       const auto& q = t.value(it);
                       const T k = T{2} * g[0] / n;
                       if (t.requires_grad(ip)) {
                         Tensor<T>& gp = t.grad_buffer(ip);
                         for (std::size_t i = 0; i < p.size(); ++i) gp[i] += k * (p[i] - q[i]);
                       }
                       if (t.requires_grad(it)) {
                         Tensor<T>& gq = t.grad_buffer(it);
                         for (std::size_t i = 0; i < p.size(); ++i) gq[i] -= k * (p[i] - q[i]);
                       }
                     });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (shape_numel(shape) != a.value().size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) +
                         " as " + shape_to_string(shape));
  }
  const auto ia = a.id();
  return a.tape().record(a.value().reshaped(std::move(shape)), {a},
                         [ia](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t offset, std::size_t count) {
  const auto& av = a.value();
  if (count == 0 || offset + count > av.size()) {
    throw DimensionError("slice: range [" + std::to_string(offset) + "," +
                         std::to_string(offset + count) + ") outside tensor of " +
                         std::to_string(av.size()) + " elements");
  }
  std::vector<T> out(av.raw() + offset, av.raw() + offset + count);
  const auto ia = a.id();
  return a.tape().record(Tensor<T>({count}, std::move(out)), {a},
                         [ia, offset](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
                         });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, std::size_t stride,
              std::size_t padding) {
  Tape<T>& tape = same_tape(input, kernel, "conv2d");
  same_tape(input, bias, "conv2d");
  const auto& x = input.value();
  const auto& k = kernel.value();
  const auto& b = bias.value();
  if (x.rank() != 4 || k.rank() != 4 || b.rank() != 1) {
    throw DimensionError("conv2d: expected input [N,C,H,W], kernel [O,C,kH,kW], bias [O]; got " +
                         shape_to_string(x.shape()) + ", " + shape_to_string(k.shape()) +
                         ", " + shape_to_string(b.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3),
             stride, padding, 0, 0};
  if (k.dim(1) != d.c) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                         " input channels, input has " + std::to_string(d.c));
  }
  if (b.dim(0) != d.o) {
    throw DimensionError("conv2d: bias length " + std::to_string(b.dim(0)) +
                         " != output channels " + std::to_string(d.o));
  }
  if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_to_string(k.shape()) +
                         " larger than padded input " + shape_to_string(x.shape()));
  }
  require_finite(x, "conv2d");
  require_finite(k, "conv2d");
  require_finite(b, "conv2d");
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;

  Tensor<T> out({d.n, d.o, d.oh, d.ow});
  T* cols = conv_workspace<T>(d.patch() * d.out_plane());
  ConstMatMap<T> kmat(k.raw(), d.o, d.patch());
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(x.raw() + n * d.c * d.h * d.w, d, cols);
    ConstMatMap<T> cmat(cols, d.patch(), d.out_plane());
    MatMap<T> omat(out.raw() + n * d.o * d.out_plane(), d.o, d.out_plane());
    omat.noalias() = kmat * cmat;
    for (std::size_t o = 0; o < d.o; ++o) omat.row(o).array() += b[o];
  }

  const auto ix = input.id(), ik = kernel.id(), ib = bias.id();
  return tape.record(std::move(out), {input, kernel, bias},
                     [ix, ik, ib, d](Tape<T>& t, const Tensor<T>& g) {
    const auto& x = t.value(ix);
    const auto& k = t.value(ik);
    const bool need_x = t.requires_grad(ix);
    const bool need_k = t.requires_grad(ik);
    const bool need_b = t.requires_grad(ib);
    T* cols = conv_workspace<T>(d.patch() * d.out_plane());
    ConstMatMap<T> kmat(k.raw(), d.o, d.patch());
    for (std::size_t n = 0; n < d.n; ++n) {
      ConstMatMap<T> gmat(g.raw() + n * d.o * d.out_plane(), d.o, d.out_plane());
      if (need_b) {
        Tensor<T>& gb = t.grad_buffer(ib);
        for (std::size_t o = 0; o < d.o; ++o) gb[o] += gmat.row(o).sum();
      }
      if (need_k) {
        im2col(x.raw() + n * d.c * d.h * d.w, d, cols);
        ConstMatMap<T> cmat(cols, d.patch(), d.out_plane());
        MatMap<T> gk(t.grad_buffer(ik).raw(), d.o, d.patch());
        gk.noalias() += gmat * cmat.transpose();
      }
      if (need_x) {
        MatMap<T> cmat(cols, d.patch(), d.out_plane());
        cmat.noalias() = kmat.transpose() * gmat;
        col2im_add(cols, d, t.grad_buffer(ix).raw() + n * d.c * d.h * d.w);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Fully connected

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  Tape<T>& tape = same_tape(x, weight, "linear");
  same_tape(x, bias, "linear");
  const auto& xv = x.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw DimensionError("linear: weight " + shape_to_string(w.shape()) +
                         " incompatible with bias " + shape_to_string(b.shape()));
  }
  const bool vector_input = xv.rank() == 1;
  const std::size_t in = w.dim(1), out_dim = w.dim(0);
  const std::size_t rows = vector_input ? 1 : xv.dim(0);
  if ((vector_input && xv.dim(0) != in) || (!vector_input && (xv.rank() != 2 || xv.dim(1) != in))) {
    throw DimensionError("linear: input " + shape_to_string(xv.shape()) +
                         " does not match weight " + shape_to_string(w.shape()));
  }
  Tensor<T> out(vector_input ? Shape{out_dim} : Shape{rows, out_dim});
  ConstMatMap<T> xm(xv.raw(), rows, in);
  ConstMatMap<T> wm(w.raw(), out_dim, in);
  MatMap<T> om(out.raw(), rows, out_dim);
  om.noalias() = xm * wm.transpose();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) om(r, o) += b[o];
  }
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape.record(std::move(out), {x, weight, bias},
                     [ix, iw, ib, rows, in, out_dim](Tape<T>& t, const Tensor<T>& g) {
    ConstMatMap<T> gm(g.raw(), rows, out_dim);
    if (t.requires_grad(ix)) {
      ConstMatMap<T> wm(t.value(iw).raw(), out_dim, in);
      MatMap<T> gx(t.grad_buffer(ix).raw(), rows, in);
      gx.noalias() += gm * wm;
    }
    if (t.requires_grad(iw)) {
      ConstMatMap<T> xm(t.value(ix).raw(), rows, in);
      MatMap<T> gw(t.grad_buffer(iw).raw(), out_dim, in);
      gw.noalias() += gm.transpose() * xm;
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gm(r, o);
      }
    }
  });
}

template <typename T>
Var<T> squared_distance(Var<T> a, const Tensor<T>& anchor) {
  require_same_shape(a.value(), anchor, "squared_distance");
  const auto& av = a.value();
  T acc{0};
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T diff = av[i] - anchor[i];
    acc += diff * diff;
  }
  const auto ia = a.id();
  return a.tape().record(Tensor<T>({1}, acc), {a}, [ia, anchor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    const auto& av = t.value(ia);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += T{2} * g[0] * (av[i] - anchor[i]);
  });
}

template <typename T>
Var<T> apply_linear(Var<T> x, const LinearMap<T>& op, const LinearMap<T>& adjoint) {
  Tensor<T> out = op(x.value());
  const auto ix = x.id();
  const Shape in_shape = x.shape();
  return x.tape().record(std::move(out), {x}, [ix, adjoint, in_shape](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> back = adjoint(g);
    if (back.size() != shape_numel(in_shape)) {
      throw DimensionError("apply_linear: adjoint produced " + shape_to_string(back.shape()) +
                           ", expected " + shape_to_string(in_shape));
    }
    t.accumulate_grad(ix, back);
  });
}

#define HYPERFED_INSTANTIATE_AUTODIFF(T)                                          \
  template class Tape<T>;                                                         \
  template Var<T> add(Var<T>, Var<T>);                                            \
  template Var<T> sub(Var<T>, Var<T>);                                            \
  template Var<T> mul(Var<T>, Var<T>);                                            \
  template Var<T> scale(Var<T>, T);                                               \
  template Var<T> add_scalar(Var<T>, T);                                          \
  template Var<T> mul_by_scalar_var(Var<T>, Var<T>);                              \
  template Var<T> relu(Var<T>);                                                   \
  template Var<T> sum(Var<T>);                                                    \
  template Var<T> mse_loss(Var<T>, Var<T>);                                       \
  template Var<T> reshape(Var<T>, Shape);                                         \
  template Var<T> slice(Var<T>, std::size_t, std::size_t);                        \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);       \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                 \
  template Var<T> squared_distance(Var<T>, const Tensor<T>&);                     \
  template Var<T> apply_linear(Var<T>, const LinearMap<T>&, const LinearMap<T>&);

HYPERFED_INSTANTIATE_AUTODIFF(float)
HYPERFED_INSTANTIATE_AUTODIFF(double)

#undef HYPERFED_INSTANTIATE_AUTODIFF

}  // namespace hyperfed
