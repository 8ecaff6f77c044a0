#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "restore/ops.hh"
#include "restore/rng.hh"
#include "restore/tensor.hh"

namespace restore {

/// Execution record for reverse-mode differentiation. Every primitive op
/// appends one node holding its operand references, whatever forward state
/// backward needs (argmax indices, dropout masks), and the output reference.
/// backward() replays nodes in exact reverse execution order and accumulates
/// gradients, so parameters reused across timesteps sum their contributions.
///
/// Values are immutable once written by their producing op. A tape is built,
/// differentiated and dropped; persistent state (model parameters) lives
/// outside and is bound as leaves per pass.
template <typename S>
class Tape {
 public:
  struct ValueId {
    std::uint32_t tape = 0;
    std::uint32_t index = 0;
  };

  Tape() : serial_(next_serial()++) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ValueId leaf(Tensor<S> value, bool trainable) {
    slots_.push_back(Slot{std::move(value), Tensor<S>{}, trainable});
    return ValueId{serial_, static_cast<std::uint32_t>(slots_.size() - 1)};
  }

  ValueId constant(Tensor<S> value) { return leaf(std::move(value), false); }

  const Tensor<S>& value(ValueId id) const { return slot(id).value; }

  /// Valid after backward(); trainable leaves untouched by the loss hold zeros.
  const Tensor<S>& grad(ValueId id) const { return slot(id).grad; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t value_count() const { return slots_.size(); }

  void backward(ValueId loss) {
    const Slot& l = slot(loss);
    if (l.value.numel() != 1)
      throw ShapeError("backward loss must be scalar, got " + shape_str(l.value.shape));
    for (Slot& s : slots_) {
      s.grad = Tensor<S>(s.value.shape);  // zero-filled
    }
    slots_[loss.index].grad.data[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back(*this);
  }

  // -- primitive ops --------------------------------------------------------

  ValueId matmul(ValueId a, ValueId b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
      throw ShapeError("matmul shape mismatch: " + shape_str(A.shape) + " x " +
                       shape_str(B.shape));
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<S> out({m, n});
    detail::gemm(A.ptr(), m, k, B.ptr(), n, out.ptr(), false);
    return record({a, b}, std::move(out), [a, b, m, k, n](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      detail::gemm_nt(dout.ptr(), m, n, t.value(b).ptr(), k, t.slot_grad(a).ptr(), true);
      detail::gemm_tn(t.value(a).ptr(), m, k, dout.ptr(), n, t.slot_grad(b).ptr(), true);
    });
  }

  ValueId add(ValueId a, ValueId b) {
    return elementwise_binary(a, b, [](S x, S y) { return x + y; },
                              [](Tape& t, ValueId ga, ValueId gb, const Tensor<S>& dout) {
                                t.accumulate(ga, dout);
                                t.accumulate(gb, dout);
                              });
  }

  ValueId sub(ValueId a, ValueId b) {
    return elementwise_binary(a, b, [](S x, S y) { return x - y; },
                              [](Tape& t, ValueId ga, ValueId gb, const Tensor<S>& dout) {
                                t.accumulate(ga, dout);
                                Tensor<S>& g = t.slot_grad(gb);
                                for (std::size_t i = 0; i < dout.numel(); ++i)
                                  g.data[i] -= dout.data[i];
                              });
  }

  /// Hadamard product.
  ValueId mul(ValueId a, ValueId b) {
    return elementwise_binary(a, b, [](S x, S y) { return x * y; },
                              [a, b](Tape& t, ValueId ga, ValueId gb, const Tensor<S>& dout) {
                                Tensor<S>& da = t.slot_grad(ga);
                                Tensor<S>& db = t.slot_grad(gb);
                                const Tensor<S>& va = t.value(a);
                                const Tensor<S>& vb = t.value(b);
                                for (std::size_t i = 0; i < dout.numel(); ++i) {
                                  da.data[i] += dout.data[i] * vb.data[i];
                                  db.data[i] += dout.data[i] * va.data[i];
                                }
                              });
  }

  ValueId scale(ValueId a, S factor) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v *= factor;
    return record({a}, std::move(out), [a, factor](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      Tensor<S>& da = t.slot_grad(a);
      for (std::size_t i = 0; i < dout.numel(); ++i) da.data[i] += factor * dout.data[i];
    });
  }

  /// [N,M] + bias[M] broadcast over rows.
  ValueId add_row_bias(ValueId x, ValueId b) {
    const Tensor<S>& X = value(x);
    const Tensor<S>& B = value(b);
    if (X.rank() != 2 || B.numel() != X.dim(1))
      throw ShapeError("add_row_bias shape mismatch: " + shape_str(X.shape) + " + " +
                       shape_str(B.shape));
    const std::size_t rows = X.dim(0), cols = X.dim(1);
    Tensor<S> out = X;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] += B.data[j];
    return record({x, b}, std::move(out), [x, b, rows, cols](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      t.accumulate(x, dout);
      Tensor<S>& db = t.slot_grad(b);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) db.data[j] += dout.data[i * cols + j];
    });
  }

  /// [N,C,H,W] (or [C,H,W]) + bias[C] broadcast over maps.
  ValueId add_channel_bias(ValueId x, ValueId b) {
    const Tensor<S>& X = value(x);
    const Tensor<S>& B = value(b);
    const bool batched = X.rank() == 4;
    if (X.rank() != 3 && !batched)
      throw ShapeError("add_channel_bias input must be rank 3 or 4, got " + shape_str(X.shape));
    const std::size_t n = batched ? X.dim(0) : 1;
    const std::size_t c = X.dim(batched ? 1 : 0);
    const std::size_t hw = X.dim(batched ? 2 : 1) * X.dim(batched ? 3 : 2);
    if (B.numel() != c)
      throw ShapeError("add_channel_bias bias " + shape_str(B.shape) + " vs input " +
                       shape_str(X.shape));
    Tensor<S> out = X;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        S bias = B.data[ch];
        S* p = out.ptr() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) p[k] += bias;
      }
    return record({x, b}, std::move(out), [x, b, n, c, hw](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      t.accumulate(x, dout);
      Tensor<S>& db = t.slot_grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const S* p = dout.ptr() + (i * c + ch) * hw;
          S acc = S(0);
          for (std::size_t k = 0; k < hw; ++k) acc += p[k];
          db.data[ch] += acc;
        }
    });
  }

  ValueId activation(ValueId x, Activation kind) {
    Tensor<S> out = apply_activation(value(x), kind);
    return record({x}, std::move(out), [x, kind](Tape& t) {
      ValueId out_id = t.out_of_node();
      const Tensor<S>& y = t.value(out_id);
      const Tensor<S>& dout = t.slot_grad(out_id);
      Tensor<S>& dx = t.slot_grad(x);
      for (std::size_t i = 0; i < dout.numel(); ++i)
        dx.data[i] += dout.data[i] * activation_deriv_from_output(y.data[i], kind);
    });
  }

  ValueId conv2d(ValueId x, ValueId kernels, std::size_t stride, Padding padding) {
    Conv2dDims dims = conv2d_dims(value(x).shape, value(kernels).shape, stride, padding);
    Tensor<S> out = restore::conv2d(value(x), value(kernels), stride, padding);
    return record({x, kernels}, std::move(out), [x, kernels, dims](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      conv2d_backward(t.value(x), t.value(kernels), dims, dout, &t.slot_grad(x),
                      &t.slot_grad(kernels));
    });
  }

  ValueId maxpool2d(ValueId x, std::size_t pool, std::size_t stride) {
    MaxPoolDims dims = maxpool2d_dims(value(x).shape, pool, stride);
    MaxPoolResult<S> r = restore::maxpool2d(value(x), pool, stride);
    std::vector<std::uint32_t> argmax = std::move(r.argmax);
    return record({x}, std::move(r.output), [x, dims, argmax = std::move(argmax)](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      maxpool2d_backward(dims, argmax, dout, t.slot_grad(x));
    });
  }

  ValueId conv2d_transpose(ValueId x, ValueId kernels, std::size_t stride, std::size_t pad,
                           std::size_t out_pad) {
    ConvT2dDims dims =
        conv2d_transpose_dims(value(x).shape, value(kernels).shape, stride, pad, out_pad);
    Tensor<S> out = restore::conv2d_transpose(value(x), value(kernels), stride, pad, out_pad);
    return record({x, kernels}, std::move(out), [x, kernels, dims](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      conv2d_transpose_backward(t.value(x), t.value(kernels), dims, dout, &t.slot_grad(x),
                                &t.slot_grad(kernels));
    });
  }

  ValueId reshape(ValueId x, Shape shape) {
    Tensor<S> out = value(x).reshaped(std::move(shape));
    return record({x}, std::move(out), [x](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      t.accumulate(x, dout);  // layouts coincide, only the labeling differs
    });
  }

  /// Inverted dropout in training mode: zero with probability rate, scale
  /// survivors by 1/(1-rate). Inference-time dropout is the identity and
  /// never enters a graph.
  ValueId dropout(ValueId x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
      throw UsageError("dropout rate must lie in [0,1), got " + std::to_string(rate));
    const Tensor<S>& X = value(x);
    Tensor<S> mask(X.shape);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    for (S& m : mask.data) m = uniform(rng) < rate ? S(0) : keep_scale;
    Tensor<S> out = X;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= mask.data[i];
    return record({x}, std::move(out), [x, mask = std::move(mask)](Tape& t) {
      const Tensor<S>& dout = t.slot_grad(t.out_of_node());
      Tensor<S>& dx = t.slot_grad(x);
      for (std::size_t i = 0; i < dout.numel(); ++i) dx.data[i] += dout.data[i] * mask.data[i];
    });
  }

  /// Sum of all elements, scalar output.
  ValueId sum(ValueId x) {
    S acc = S(0);
    for (S v : value(x).data) acc += v;
    return record({x}, Tensor<S>({1}, {acc}), [x](Tape& t) {
      const S d = t.slot_grad(t.out_of_node()).data[0];
      Tensor<S>& dx = t.slot_grad(x);
      for (S& g : dx.data) g += d;
    });
  }

  /// Sum of squared elements, scalar output.
  ValueId sum_squares(ValueId x) {
    S acc = S(0);
    for (S v : value(x).data) acc += v * v;
    return record({x}, Tensor<S>({1}, {acc}), [x](Tape& t) {
      const S d = t.slot_grad(t.out_of_node()).data[0];
      const Tensor<S>& vx = t.value(x);
      Tensor<S>& dx = t.slot_grad(x);
      for (std::size_t i = 0; i < vx.numel(); ++i) dx.data[i] += S(2) * d * vx.data[i];
    });
  }

  ValueId sqrt_scalar(ValueId x) {
    const Tensor<S>& X = value(x);
    if (X.numel() != 1)
      throw ShapeError("sqrt_scalar expects a scalar, got " + shape_str(X.shape));
    S y = std::sqrt(X.data[0]);
    return record({x}, Tensor<S>({1}, {y}), [x, y](Tape& t) {
      // subgradient 0 at the origin keeps a perfect fit from producing NaN
      if (y > S(0)) t.slot_grad(x).data[0] += t.slot_grad(t.out_of_node()).data[0] / (S(2) * y);
    });
  }

 private:
  struct Slot {
    Tensor<S> value;
    Tensor<S> grad;
    bool trainable;
  };
  struct Node {
    std::vector<std::uint32_t> ins;
    std::uint32_t out;
    std::function<void(Tape&)> back;
  };

  static std::atomic<std::uint32_t>& next_serial() {
    static std::atomic<std::uint32_t> serial{1};
    return serial;
  }

  const Slot& slot(ValueId id) const {
    if (id.tape != serial_ || id.index >= slots_.size())
      throw Error("value id does not belong to this computation record");
    return slots_[id.index];
  }

  Tensor<S>& slot_grad(ValueId id) { return slots_[id.index].grad; }

  // Valid only inside a node's backward closure; set by the replay loop.
  ValueId out_of_node() const { return ValueId{serial_, current_out_}; }

  void accumulate(ValueId id, const Tensor<S>& delta) {
    Tensor<S>& g = slots_[id.index].grad;
    for (std::size_t i = 0; i < delta.numel(); ++i) g.data[i] += delta.data[i];
  }

  template <typename Back>
  ValueId record(std::initializer_list<ValueId> ins, Tensor<S> out, Back&& back) {
    std::vector<std::uint32_t> in_idx;
    in_idx.reserve(ins.size());
    for (ValueId id : ins) {
      slot(id);  // validates ownership
      in_idx.push_back(id.index);
    }
    ValueId out_id = leaf(std::move(out), false);
    std::uint32_t out_idx = out_id.index;
    nodes_.push_back(Node{std::move(in_idx), out_idx,
                          [out_idx, back = std::forward<Back>(back)](Tape& t) {
                            t.current_out_ = out_idx;
                            back(t);
                          }});
    return out_id;
  }

  template <typename Fwd, typename Back>
  ValueId elementwise_binary(ValueId a, ValueId b, Fwd&& fwd, Back&& back) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (A.shape != B.shape)
      throw ShapeError("elementwise shape mismatch: " + shape_str(A.shape) + " vs " +
                       shape_str(B.shape));
    Tensor<S> out(A.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = fwd(A.data[i], B.data[i]);
    return record({a, b}, std::move(out), [a, b, back = std::forward<Back>(back)](Tape& t) {
      back(t, a, b, t.slot_grad(t.out_of_node()));
    });
  }

  std::uint32_t serial_;
  std::uint32_t current_out_ = 0;
  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
};

}  // namespace restore
