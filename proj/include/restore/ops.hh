#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "restore/tensor.hh"

namespace restore {

enum class Activation { Relu, Sigmoid, Tanh };
enum class Padding { Same, Valid };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    default: return "tanh";
  }
}

namespace detail {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// out (+)= a[m,k] * b[k,n]
template <typename S>
void gemm(const S* a, std::size_t m, std::size_t k, const S* b, std::size_t n, S* out,
          bool accumulate) {
  ConstMatMap<S> A(a, m, k), B(b, k, n);
  MatMap<S> C(out, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// out (+)= a[m,k] * b[n,k]^T
template <typename S>
void gemm_nt(const S* a, std::size_t m, std::size_t k, const S* b, std::size_t n, S* out,
             bool accumulate) {
  ConstMatMap<S> A(a, m, k), B(b, n, k);
  MatMap<S> C(out, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// out (+)= a[k,m]^T * b[k,n]
template <typename S>
void gemm_tn(const S* a, std::size_t k, std::size_t m, const S* b, std::size_t n, S* out,
             bool accumulate) {
  ConstMatMap<S> A(a, k, m), B(b, k, n);
  MatMap<S> C(out, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

template <typename S>
S sigmoid_scalar(S x) {
  if (x >= S(0)) {
    S e = std::exp(-x);
    return S(1) / (S(1) + e);
  }
  S e = std::exp(x);
  return e / (S(1) + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct Conv2dDims {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t out_channels, k_h, k_w;
  std::size_t stride;
  std::size_t pad_top, pad_left;
  std::size_t out_h, out_w;
  bool batched_input;  // rank-4 input; rank-3 is treated as batch of one
};

inline Conv2dDims conv2d_dims(const Shape& input, const Shape& kernels, std::size_t stride,
                              Padding padding) {
  if (kernels.size() != 4)
    throw ShapeError("conv2d kernels must be [K,C,kh,kw], got " + shape_str(kernels));
  if (input.size() != 3 && input.size() != 4)
    throw ShapeError("conv2d input must be [C,H,W] or [N,C,H,W], got " + shape_str(input));
  if (stride == 0) throw ShapeError("conv2d stride must be positive");

  Conv2dDims d{};
  d.batched_input = input.size() == 4;
  d.batch = d.batched_input ? input[0] : 1;
  d.in_channels = input[d.batched_input ? 1 : 0];
  d.in_h = input[d.batched_input ? 2 : 1];
  d.in_w = input[d.batched_input ? 3 : 2];
  d.out_channels = kernels[0];
  d.k_h = kernels[2];
  d.k_w = kernels[3];
  d.stride = stride;

  if (kernels[1] != d.in_channels)
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input) + " vs kernels " +
                     shape_str(kernels));

  if (padding == Padding::Same) {
    d.out_h = (d.in_h + stride - 1) / stride;
    d.out_w = (d.in_w + stride - 1) / stride;
    std::size_t need_h = (d.out_h - 1) * stride + d.k_h;
    std::size_t need_w = (d.out_w - 1) * stride + d.k_w;
    std::size_t pad_h = need_h > d.in_h ? need_h - d.in_h : 0;
    std::size_t pad_w = need_w > d.in_w ? need_w - d.in_w : 0;
    d.pad_top = pad_h / 2;
    d.pad_left = pad_w / 2;
  } else {
    if (d.k_h > d.in_h || d.k_w > d.in_w)
      throw ShapeError("conv2d kernel " + shape_str(kernels) + " exceeds input extent " +
                       shape_str(input));
    d.pad_top = 0;
    d.pad_left = 0;
    d.out_h = (d.in_h - d.k_h) / stride + 1;
    d.out_w = (d.in_w - d.k_w) / stride + 1;
  }
  return d;
}

namespace detail {

// cols is [out_h*out_w, C*kh*kw] for one sample, zero-filled where padding reaches.
template <typename S>
void im2col(const S* img, const Conv2dDims& d, S* cols) {
  const std::size_t patch = d.in_channels * d.k_h * d.k_w;
  for (std::size_t oy = 0; oy < d.out_h; ++oy) {
    for (std::size_t ox = 0; ox < d.out_w; ++ox) {
      S* row = cols + (oy * d.out_w + ox) * patch;
      const std::ptrdiff_t base_y = static_cast<std::ptrdiff_t>(oy * d.stride) -
                                    static_cast<std::ptrdiff_t>(d.pad_top);
      const std::ptrdiff_t base_x = static_cast<std::ptrdiff_t>(ox * d.stride) -
                                    static_cast<std::ptrdiff_t>(d.pad_left);
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        const S* map = img + c * d.in_h * d.in_w;
        for (std::size_t ky = 0; ky < d.k_h; ++ky) {
          std::ptrdiff_t iy = base_y + static_cast<std::ptrdiff_t>(ky);
          for (std::size_t kx = 0; kx < d.k_w; ++kx) {
            std::ptrdiff_t ix = base_x + static_cast<std::ptrdiff_t>(kx);
            bool in = iy >= 0 && iy < static_cast<std::ptrdiff_t>(d.in_h) && ix >= 0 &&
                      ix < static_cast<std::ptrdiff_t>(d.in_w);
            *row++ = in ? map[iy * static_cast<std::ptrdiff_t>(d.in_w) + ix] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_acc(const S* cols, const Conv2dDims& d, S* img_grad) {
  const std::size_t patch = d.in_channels * d.k_h * d.k_w;
  for (std::size_t oy = 0; oy < d.out_h; ++oy) {
    for (std::size_t ox = 0; ox < d.out_w; ++ox) {
      const S* row = cols + (oy * d.out_w + ox) * patch;
      const std::ptrdiff_t base_y = static_cast<std::ptrdiff_t>(oy * d.stride) -
                                    static_cast<std::ptrdiff_t>(d.pad_top);
      const std::ptrdiff_t base_x = static_cast<std::ptrdiff_t>(ox * d.stride) -
                                    static_cast<std::ptrdiff_t>(d.pad_left);
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        S* map = img_grad + c * d.in_h * d.in_w;
        for (std::size_t ky = 0; ky < d.k_h; ++ky) {
          std::ptrdiff_t iy = base_y + static_cast<std::ptrdiff_t>(ky);
          for (std::size_t kx = 0; kx < d.k_w; ++kx) {
            std::ptrdiff_t ix = base_x + static_cast<std::ptrdiff_t>(kx);
            if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(d.in_h) && ix >= 0 &&
                ix < static_cast<std::ptrdiff_t>(d.in_w))
              map[iy * static_cast<std::ptrdiff_t>(d.in_w) + ix] += *row;
            ++row;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// y_j = sum_i k_ij * x_i, sliding window; activation is applied separately.
/// Same padding with stride 1 preserves the spatial extent.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernels, std::size_t stride,
                 Padding padding) {
  Conv2dDims d = conv2d_dims(input.shape, kernels.shape, stride, padding);
  Shape out_shape = d.batched_input
                        ? Shape{d.batch, d.out_channels, d.out_h, d.out_w}
                        : Shape{d.out_channels, d.out_h, d.out_w};
  Tensor<S> out(out_shape);
  const std::size_t patch = d.in_channels * d.k_h * d.k_w;
  const std::size_t per_in = d.in_channels * d.in_h * d.in_w;
  const std::size_t per_out = d.out_channels * d.out_h * d.out_w;
  std::vector<S> cols(d.out_h * d.out_w * patch);
  for (std::size_t n = 0; n < d.batch; ++n) {
    detail::im2col(input.ptr() + n * per_in, d, cols.data());
    // out_n [K, HW] = kernels [K, patch] * cols^T [patch, HW]
    detail::gemm_nt(kernels.ptr(), d.out_channels, patch, cols.data(), d.out_h * d.out_w,
                    out.ptr() + n * per_out, false);
  }
  return out;
}

/// Gradients of conv2d; either of d_input/d_kernels may be null. Accumulates.
template <typename S>
void conv2d_backward(const Tensor<S>& input, const Tensor<S>& kernels, const Conv2dDims& d,
                     const Tensor<S>& d_out, Tensor<S>* d_input, Tensor<S>* d_kernels) {
  const std::size_t patch = d.in_channels * d.k_h * d.k_w;
  const std::size_t hw = d.out_h * d.out_w;
  const std::size_t per_in = d.in_channels * d.in_h * d.in_w;
  const std::size_t per_out = d.out_channels * hw;
  std::vector<S> cols(hw * patch);
  std::vector<S> dcols(hw * patch);
  for (std::size_t n = 0; n < d.batch; ++n) {
    const S* dout_n = d_out.ptr() + n * per_out;  // [K, HW]
    if (d_kernels) {
      detail::im2col(input.ptr() + n * per_in, d, cols.data());
      // dK [K, patch] += dout_n [K, HW] * cols [HW, patch]
      detail::gemm(dout_n, d.out_channels, hw, cols.data(), patch, d_kernels->ptr(), true);
    }
    if (d_input) {
      // dcols [HW, patch] = dout_n^T [HW, K] * kernels [K, patch]
      detail::gemm_tn(dout_n, d.out_channels, hw, kernels.ptr(), patch, dcols.data(), false);
      detail::col2im_acc(dcols.data(), d, d_input->ptr() + n * per_in);
    }
  }
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

struct MaxPoolDims {
  std::size_t batch, channels, in_h, in_w, pool, stride, out_h, out_w;
  bool batched_input;
};

inline MaxPoolDims maxpool2d_dims(const Shape& input, std::size_t pool, std::size_t stride) {
  if (input.size() != 3 && input.size() != 4)
    throw ShapeError("maxpool2d input must be [C,H,W] or [N,C,H,W], got " + shape_str(input));
  if (pool == 0 || stride == 0) throw ShapeError("maxpool2d pool and stride must be positive");
  MaxPoolDims d{};
  d.batched_input = input.size() == 4;
  d.batch = d.batched_input ? input[0] : 1;
  d.channels = input[d.batched_input ? 1 : 0];
  d.in_h = input[d.batched_input ? 2 : 1];
  d.in_w = input[d.batched_input ? 3 : 2];
  d.pool = pool;
  d.stride = stride;
  if (pool > d.in_h || pool > d.in_w)
    throw ShapeError("maxpool2d window exceeds input extent " + shape_str(input));
  if ((d.in_h - pool) % stride != 0 || (d.in_w - pool) % stride != 0)
    throw ShapeError("maxpool2d extent " + shape_str(input) + " not divisible by stride " +
                     std::to_string(stride) + " (padding not supported)");
  d.out_h = (d.in_h - pool) / stride + 1;
  d.out_w = (d.in_w - pool) / stride + 1;
  return d;
}

template <typename S>
struct MaxPoolResult {
  Tensor<S> output;
  // Flat index into each [H,W] map of the winning element, one per output
  // cell; routes the gradient in backward.
  std::vector<std::uint32_t> argmax;
};

template <typename S>
MaxPoolResult<S> maxpool2d(const Tensor<S>& input, std::size_t pool, std::size_t stride) {
  MaxPoolDims d = maxpool2d_dims(input.shape, pool, stride);
  Shape out_shape = d.batched_input ? Shape{d.batch, d.channels, d.out_h, d.out_w}
                                    : Shape{d.channels, d.out_h, d.out_w};
  MaxPoolResult<S> r{Tensor<S>(out_shape), {}};
  r.argmax.resize(d.batch * d.channels * d.out_h * d.out_w);
  const std::size_t maps = d.batch * d.channels;
  for (std::size_t m = 0; m < maps; ++m) {
    const S* in = input.ptr() + m * d.in_h * d.in_w;
    S* out = r.output.ptr() + m * d.out_h * d.out_w;
    std::uint32_t* arg = r.argmax.data() + m * d.out_h * d.out_w;
    for (std::size_t oy = 0; oy < d.out_h; ++oy) {
      for (std::size_t ox = 0; ox < d.out_w; ++ox) {
        std::size_t best = (oy * d.stride) * d.in_w + ox * d.stride;
        S best_v = in[best];
        for (std::size_t py = 0; py < d.pool; ++py) {
          for (std::size_t px = 0; px < d.pool; ++px) {
            std::size_t idx = (oy * d.stride + py) * d.in_w + (ox * d.stride + px);
            if (in[idx] > best_v) {  // first max wins ties: deterministic
              best_v = in[idx];
              best = idx;
            }
          }
        }
        out[oy * d.out_w + ox] = best_v;
        arg[oy * d.out_w + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename S>
void maxpool2d_backward(const MaxPoolDims& d, const std::vector<std::uint32_t>& argmax,
                        const Tensor<S>& d_out, Tensor<S>& d_input) {
  const std::size_t maps = d.batch * d.channels;
  const std::size_t cells = d.out_h * d.out_w;
  for (std::size_t m = 0; m < maps; ++m) {
    S* din = d_input.ptr() + m * d.in_h * d.in_w;
    const S* dout = d_out.ptr() + m * cells;
    const std::uint32_t* arg = argmax.data() + m * cells;
    for (std::size_t i = 0; i < cells; ++i) din[arg[i]] += dout[i];
  }
}

// ---------------------------------------------------------------------------
// Transposed convolution (stride-s upsampling)
// ---------------------------------------------------------------------------

struct ConvT2dDims {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t out_channels, k_h, k_w;
  std::size_t stride, pad, out_pad;
  std::size_t out_h, out_w;
  bool batched_input;
};

inline ConvT2dDims conv2d_transpose_dims(const Shape& input, const Shape& kernels,
                                         std::size_t stride, std::size_t pad,
                                         std::size_t out_pad) {
  if (kernels.size() != 4)
    throw ShapeError("conv2d_transpose kernels must be [Cin,Cout,kh,kw], got " +
                     shape_str(kernels));
  if (input.size() != 3 && input.size() != 4)
    throw ShapeError("conv2d_transpose input must be [C,H,W] or [N,C,H,W], got " +
                     shape_str(input));
  if (stride == 0) throw ShapeError("conv2d_transpose stride must be positive");
  if (out_pad >= stride) throw ShapeError("conv2d_transpose output padding must be < stride");
  ConvT2dDims d{};
  d.batched_input = input.size() == 4;
  d.batch = d.batched_input ? input[0] : 1;
  d.in_channels = input[d.batched_input ? 1 : 0];
  d.in_h = input[d.batched_input ? 2 : 1];
  d.in_w = input[d.batched_input ? 3 : 2];
  if (kernels[0] != d.in_channels)
    throw ShapeError("conv2d_transpose channel mismatch: input " + shape_str(input) +
                     " vs kernels " + shape_str(kernels));
  d.out_channels = kernels[1];
  d.k_h = kernels[2];
  d.k_w = kernels[3];
  d.stride = stride;
  d.pad = pad;
  d.out_pad = out_pad;
  std::ptrdiff_t oh = static_cast<std::ptrdiff_t>((d.in_h - 1) * stride + d.k_h + out_pad) -
                      2 * static_cast<std::ptrdiff_t>(pad);
  std::ptrdiff_t ow = static_cast<std::ptrdiff_t>((d.in_w - 1) * stride + d.k_w + out_pad) -
                      2 * static_cast<std::ptrdiff_t>(pad);
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d_transpose output collapsed for input " + shape_str(input));
  d.out_h = static_cast<std::size_t>(oh);
  d.out_w = static_cast<std::size_t>(ow);
  return d;
}

/// Scatter form of the convolution adjoint: each input pixel paints a kernel
/// patch into the output. One GEMM per kernel offset.
template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& input, const Tensor<S>& kernels, std::size_t stride,
                           std::size_t pad, std::size_t out_pad) {
  ConvT2dDims d = conv2d_transpose_dims(input.shape, kernels.shape, stride, pad, out_pad);
  Shape out_shape = d.batched_input ? Shape{d.batch, d.out_channels, d.out_h, d.out_w}
                                    : Shape{d.out_channels, d.out_h, d.out_w};
  Tensor<S> out(out_shape);
  const std::size_t hw = d.in_h * d.in_w;
  const std::size_t per_in = d.in_channels * hw;
  const std::size_t per_out = d.out_channels * d.out_h * d.out_w;
  std::vector<S> slice(d.in_channels * d.out_channels);  // [Cin, Cout] at one (ky,kx)
  std::vector<S> tmp(d.out_channels * hw);
  for (std::size_t ky = 0; ky < d.k_h; ++ky) {
    for (std::size_t kx = 0; kx < d.k_w; ++kx) {
      for (std::size_t ci = 0; ci < d.in_channels; ++ci)
        for (std::size_t co = 0; co < d.out_channels; ++co)
          slice[ci * d.out_channels + co] =
              kernels.data[((ci * d.out_channels + co) * d.k_h + ky) * d.k_w + kx];
      for (std::size_t n = 0; n < d.batch; ++n) {
        // tmp [Cout, HW] = slice^T [Cout, Cin] * x_n [Cin, HW]
        detail::gemm_tn(slice.data(), d.in_channels, d.out_channels, input.ptr() + n * per_in,
                        hw, tmp.data(), false);
        S* out_n = out.ptr() + n * per_out;
        for (std::size_t co = 0; co < d.out_channels; ++co) {
          const S* src = tmp.data() + co * hw;
          S* dst = out_n + co * d.out_h * d.out_w;
          for (std::size_t iy = 0; iy < d.in_h; ++iy) {
            std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * d.stride + ky) -
                                static_cast<std::ptrdiff_t>(d.pad);
            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(d.out_h)) continue;
            for (std::size_t ix = 0; ix < d.in_w; ++ix) {
              std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix * d.stride + kx) -
                                  static_cast<std::ptrdiff_t>(d.pad);
              if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(d.out_w)) continue;
              dst[oy * static_cast<std::ptrdiff_t>(d.out_w) + ox] += src[iy * d.in_w + ix];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename S>
void conv2d_transpose_backward(const Tensor<S>& input, const Tensor<S>& kernels,
                               const ConvT2dDims& d, const Tensor<S>& d_out, Tensor<S>* d_input,
                               Tensor<S>* d_kernels) {
  const std::size_t hw = d.in_h * d.in_w;
  const std::size_t per_in = d.in_channels * hw;
  const std::size_t per_out = d.out_channels * d.out_h * d.out_w;
  std::vector<S> slice(d.in_channels * d.out_channels);
  std::vector<S> dslice(d.in_channels * d.out_channels);
  std::vector<S> gathered(d.out_channels * hw);
  for (std::size_t ky = 0; ky < d.k_h; ++ky) {
    for (std::size_t kx = 0; kx < d.k_w; ++kx) {
      for (std::size_t ci = 0; ci < d.in_channels; ++ci)
        for (std::size_t co = 0; co < d.out_channels; ++co)
          slice[ci * d.out_channels + co] =
              kernels.data[((ci * d.out_channels + co) * d.k_h + ky) * d.k_w + kx];
      std::fill(dslice.begin(), dslice.end(), S(0));
      for (std::size_t n = 0; n < d.batch; ++n) {
        const S* dout_n = d_out.ptr() + n * per_out;
        for (std::size_t co = 0; co < d.out_channels; ++co) {
          const S* src = dout_n + co * d.out_h * d.out_w;
          S* dst = gathered.data() + co * hw;
          for (std::size_t iy = 0; iy < d.in_h; ++iy) {
            std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * d.stride + ky) -
                                static_cast<std::ptrdiff_t>(d.pad);
            for (std::size_t ix = 0; ix < d.in_w; ++ix) {
              std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix * d.stride + kx) -
                                  static_cast<std::ptrdiff_t>(d.pad);
              bool in = oy >= 0 && oy < static_cast<std::ptrdiff_t>(d.out_h) && ox >= 0 &&
                        ox < static_cast<std::ptrdiff_t>(d.out_w);
              dst[iy * d.in_w + ix] =
                  in ? src[oy * static_cast<std::ptrdiff_t>(d.out_w) + ox] : S(0);
            }
          }
        }
        if (d_input)
          // dx_n [Cin, HW] += slice [Cin, Cout] * gathered [Cout, HW]
          detail::gemm(slice.data(), d.in_channels, d.out_channels, gathered.data(), hw,
                       d_input->ptr() + n * per_in, true);
        if (d_kernels)
          // dslice [Cin, Cout] += x_n [Cin, HW] * gathered^T [HW, Cout]
          detail::gemm_nt(input.ptr() + n * per_in, d.in_channels, hw, gathered.data(),
                          d.out_channels, dslice.data(), true);
      }
      if (d_kernels)
        for (std::size_t ci = 0; ci < d.in_channels; ++ci)
          for (std::size_t co = 0; co < d.out_channels; ++co)
            d_kernels->data[((ci * d.out_channels + co) * d.k_h + ky) * d.k_w + kx] +=
                dslice[ci * d.out_channels + co];
    }
  }
}

// ---------------------------------------------------------------------------
// Dense and activations
// ---------------------------------------------------------------------------

/// W^v . y + b, pre-activation. Accepts a vector [N] or a batch [B,N].
template <typename S>
Tensor<S> dense(const Tensor<S>& input, const Tensor<S>& weights, const Tensor<S>& bias) {
  if (weights.rank() != 2)
    throw ShapeError("dense weights must be [N,M], got " + shape_str(weights.shape));
  const std::size_t n = weights.dim(0), m = weights.dim(1);
  if (bias.numel() != m)
    throw ShapeError("dense bias " + shape_str(bias.shape) + " does not match weights " +
                     shape_str(weights.shape));
  const bool batched = input.rank() == 2;
  const std::size_t b = batched ? input.dim(0) : 1;
  const std::size_t in_w = batched ? input.dim(1) : input.numel();
  if (in_w != n)
    throw ShapeError("dense dimension mismatch: input " + shape_str(input.shape) +
                     " vs weights " + shape_str(weights.shape));
  Tensor<S> out(batched ? Shape{b, m} : Shape{m});
  detail::gemm(input.ptr(), b, n, weights.ptr(), m, out.ptr(), false);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += bias.data[j];
  return out;
}

template <typename S>
S activation_scalar(S x, Activation kind) {
  switch (kind) {
    case Activation::Relu: return x > S(0) ? x : S(0);
    case Activation::Sigmoid: return detail::sigmoid_scalar(x);
    default: return std::tanh(x);
  }
}

/// Derivative expressed in terms of the activation output. ReLU at exactly 0
/// uses the 0 subgradient.
template <typename S>
S activation_deriv_from_output(S y, Activation kind) {
  switch (kind) {
    case Activation::Relu: return y > S(0) ? S(1) : S(0);
    case Activation::Sigmoid: return y * (S(1) - y);
    default: return S(1) - y * y;
  }
}

template <typename S>
Tensor<S> apply_activation(const Tensor<S>& input, Activation kind) {
  Tensor<S> out = input;
  for (S& v : out.data) v = activation_scalar(v, kind);
  return out;
}

}  // namespace restore
