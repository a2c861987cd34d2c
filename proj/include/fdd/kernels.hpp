#pragma once

// Raw 3x3 convolution kernels over NCHW tensors. Each batch item is lowered
// to a patch matrix (im2col) and multiplied with the weight matrix.

#include <Eigen/Core>

#include <cstddef>
#include <string>

#include "fdd/error.hpp"
#include "fdd/tensor.hpp"

namespace fdd::kernels {

inline constexpr std::size_t kKernel = 3;

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct TransposedConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding_h = 0;
  std::size_t output_padding_w = 0;
};

/// floor((extent + 2*padding - 3) / stride) + 1, or 0 when the kernel does
/// not fit.
constexpr std::size_t conv_output_extent(std::size_t extent, std::size_t stride,
                                         std::size_t padding) noexcept {
  if (extent + 2 * padding < kKernel || stride == 0) return 0;
  return (extent + 2 * padding - kKernel) / stride + 1;
}

/// (extent - 1)*stride - 2*padding + 3 + output_padding, or 0 if negative.
constexpr std::size_t transposed_output_extent(
    std::size_t extent, std::size_t stride, std::size_t padding,
    std::size_t output_padding) noexcept {
  const std::size_t grown = (extent - 1) * stride + kKernel + output_padding;
  return grown > 2 * padding ? grown - 2 * padding : 0;
}

namespace detail {

template <class Real>
using RowMatrix =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MatrixMap = Eigen::Map<RowMatrix<Real>>;
template <class Real>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Real>>;

/// Geometry of a forward (cross-correlation) convolution for one batch item.
struct Geometry {
  std::size_t channels, height, width;  // input
  std::size_t out_height, out_width;
  std::size_t stride, padding;

  std::size_t patch_rows() const { return channels * kKernel * kKernel; }
  std::size_t patch_cols() const { return out_height * out_width; }
};

template <class Real>
void im2col(const Real* image, const Geometry& g, Real* col) {
  const std::size_t cols = g.patch_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t kh = 0; kh < kKernel; ++kh) {
      for (std::size_t kw = 0; kw < kKernel; ++kw) {
        Real* row = col + ((c * kKernel + kh) * kKernel + kw) * cols;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const std::ptrdiff_t ih =
              static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
              static_cast<std::ptrdiff_t>(g.padding);
          Real* dst = row + oh * g.out_width;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_width, Real(0));
            continue;
          }
          const Real* src = image + (c * g.height + ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                static_cast<std::ptrdiff_t>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width))
                          ? Real(0)
                          : src[iw];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch entries back, summing overlaps.
template <class Real>
void col2im_add(const Real* col, const Geometry& g, Real* image) {
  const std::size_t cols = g.patch_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t kh = 0; kh < kKernel; ++kh) {
      for (std::size_t kw = 0; kw < kKernel; ++kw) {
        const Real* row = col + ((c * kKernel + kh) * kKernel + kw) * cols;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const std::ptrdiff_t ih =
              static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
              static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const Real* src = row + oh * g.out_width;
          Real* dst = image + (c * g.height + ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                static_cast<std::ptrdiff_t>(g.padding);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) {
              dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

inline void require(bool ok, const std::string& what) {
  if (!ok) fdd::detail::throw_dimension(what);
}

template <class Real>
void check_conv_args(const BasicTensor<Real>& input,
                     const BasicTensor<Real>& weights,
                     const BasicTensor<Real>& bias, const char* op) {
  require(input.rank() == 4, std::string(op) + ": input must be NCHW, got " +
                                 shape_string(input.shape()));
  require(weights.rank() == 4 && weights.dim(2) == kKernel &&
              weights.dim(3) == kKernel,
          std::string(op) + ": weights must be [*,*,3,3], got " +
              shape_string(weights.shape()));
  require(bias.rank() == 1, std::string(op) + ": bias must be rank 1");
}

}  // namespace detail

template <class Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input,
                         const BasicTensor<Real>& weights,
                         const BasicTensor<Real>& bias, ConvOptions opt) {
  using namespace detail;
  check_conv_args(input, weights, bias, "conv2d");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t f = weights.dim(0);
  require(weights.dim(1) == c, "conv2d: input has " + std::to_string(c) +
                                   " channels but weights expect " +
                                   std::to_string(weights.dim(1)));
  require(bias.dim(0) == f, "conv2d: bias length does not match filters");
  require(opt.stride >= 1, "conv2d: stride must be >= 1");
  const Geometry g{c,
                   input.dim(2),
                   input.dim(3),
                   conv_output_extent(input.dim(2), opt.stride, opt.padding),
                   conv_output_extent(input.dim(3), opt.stride, opt.padding),
                   opt.stride,
                   opt.padding};
  require(g.out_height > 0 && g.out_width > 0,
          "conv2d: kernel larger than padded input");

  BasicTensor<Real> out({n, f, g.out_height, g.out_width});
  RowMatrix<Real> col(g.patch_rows(), g.patch_cols());
  ConstMatrixMap<Real> w(weights.raw(), f, g.patch_rows());
  const std::size_t in_stride = c * g.height * g.width;
  const std::size_t out_stride = f * g.patch_cols();
  for (std::size_t i = 0; i < n; ++i) {
    im2col(input.raw() + i * in_stride, g, col.data());
    MatrixMap<Real> y(out.raw() + i * out_stride, f, g.patch_cols());
    y.noalias() = w * col;
    for (std::size_t k = 0; k < f; ++k) y.row(k).array() += bias[k];
  }
  return out;
}

/// Gradients of conv2d. Any output pointer may be null.
template <class Real>
void conv2d_backward(const BasicTensor<Real>& input,
                     const BasicTensor<Real>& weights,
                     const BasicTensor<Real>& grad_out, ConvOptions opt,
                     BasicTensor<Real>* grad_input,
                     BasicTensor<Real>* grad_weights,
                     BasicTensor<Real>* grad_bias) {
  using namespace detail;
  const std::size_t n = input.dim(0), c = input.dim(1), f = weights.dim(0);
  const Geometry g{c,           input.dim(2),   input.dim(3), grad_out.dim(2),
                   grad_out.dim(3), opt.stride, opt.padding};
  RowMatrix<Real> col(g.patch_rows(), g.patch_cols());
  RowMatrix<Real> dcol;
  ConstMatrixMap<Real> w(weights.raw(), f, g.patch_rows());
  const std::size_t in_stride = c * g.height * g.width;
  const std::size_t out_stride = f * g.patch_cols();
  for (std::size_t i = 0; i < n; ++i) {
    ConstMatrixMap<Real> dy(grad_out.raw() + i * out_stride, f,
                            g.patch_cols());
    if (grad_weights) {
      im2col(input.raw() + i * in_stride, g, col.data());
      MatrixMap<Real> dw(grad_weights->raw(), f, g.patch_rows());
      dw.noalias() += dy * col.transpose();
    }
    if (grad_bias) {
      for (std::size_t k = 0; k < f; ++k) (*grad_bias)[k] += dy.row(k).sum();
    }
    if (grad_input) {
      dcol.noalias() = w.transpose() * dy;
      col2im_add(dcol.data(), g, grad_input->raw() + i * in_stride);
    }
  }
}

/// Transposed convolution; weights are [in_channels, out_channels, 3, 3].
template <class Real>
BasicTensor<Real> conv2d_transpose(const BasicTensor<Real>& input,
                                   const BasicTensor<Real>& weights,
                                   const BasicTensor<Real>& bias,
                                   TransposedConvOptions opt) {
  using namespace detail;
  check_conv_args(input, weights, bias, "conv2d_transpose");
  const std::size_t n = input.dim(0), cin = input.dim(1);
  require(weights.dim(0) == cin,
          "conv2d_transpose: input has " + std::to_string(cin) +
              " channels but weights expect " + std::to_string(weights.dim(0)));
  const std::size_t cout = weights.dim(1);
  require(bias.dim(0) == cout, "conv2d_transpose: bias length mismatch");
  require(opt.stride >= 1 && opt.output_padding_h < opt.stride &&
              opt.output_padding_w < opt.stride,
          "conv2d_transpose: output_padding must be smaller than stride");
  const std::size_t h = input.dim(2), w_in = input.dim(3);
  const std::size_t oh = transposed_output_extent(h, opt.stride, opt.padding,
                                                  opt.output_padding_h);
  const std::size_t ow = transposed_output_extent(w_in, opt.stride,
                                                  opt.padding,
                                                  opt.output_padding_w);
  require(oh > 0 && ow > 0, "conv2d_transpose: empty output");
  // The forward conv whose input-adjoint this is maps [cout, oh, ow] back to
  // [cin, h, w].
  const Geometry g{cout, oh, ow, h, w_in, opt.stride, opt.padding};
  require(conv_output_extent(oh, opt.stride, opt.padding) == h &&
              conv_output_extent(ow, opt.stride, opt.padding) == w_in,
          "conv2d_transpose: inconsistent geometry");

  BasicTensor<Real> out({n, cout, oh, ow});
  RowMatrix<Real> col;
  ConstMatrixMap<Real> wm(weights.raw(), cin, g.patch_rows());
  const std::size_t in_stride = cin * h * w_in;
  const std::size_t out_stride = cout * oh * ow;
  for (std::size_t i = 0; i < n; ++i) {
    ConstMatrixMap<Real> x(input.raw() + i * in_stride, cin, h * w_in);
    col.noalias() = wm.transpose() * x;
    Real* y = out.raw() + i * out_stride;
    col2im_add(col.data(), g, y);
    for (std::size_t k = 0; k < cout; ++k) {
      Real* plane = y + k * oh * ow;
      for (std::size_t p = 0; p < oh * ow; ++p) plane[p] += bias[k];
    }
  }
  return out;
}

template <class Real>
void conv2d_transpose_backward(const BasicTensor<Real>& input,
                               const BasicTensor<Real>& weights,
                               const BasicTensor<Real>& grad_out,
                               TransposedConvOptions opt,
                               BasicTensor<Real>* grad_input,
                               BasicTensor<Real>* grad_weights,
                               BasicTensor<Real>* grad_bias) {
  using namespace detail;
  const std::size_t n = input.dim(0), cin = input.dim(1);
  const std::size_t cout = weights.dim(1);
  const std::size_t h = input.dim(2), w_in = input.dim(3);
  const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  const Geometry g{cout, oh, ow, h, w_in, opt.stride, opt.padding};
  RowMatrix<Real> col(g.patch_rows(), g.patch_cols());
  ConstMatrixMap<Real> wm(weights.raw(), cin, g.patch_rows());
  const std::size_t in_stride = cin * h * w_in;
  const std::size_t out_stride = cout * oh * ow;
  for (std::size_t i = 0; i < n; ++i) {
    const Real* dy = grad_out.raw() + i * out_stride;
    if (grad_bias) {
      for (std::size_t k = 0; k < cout; ++k) {
        const Real* plane = dy + k * oh * ow;
        Real s = 0;
        for (std::size_t p = 0; p < oh * ow; ++p) s += plane[p];
        (*grad_bias)[k] += s;
      }
    }
    if (!grad_input && !grad_weights) continue;
    im2col(dy, g, col.data());
    if (grad_input) {
      MatrixMap<Real> dx(grad_input->raw() + i * in_stride, cin, h * w_in);
      dx.noalias() += wm * col;
    }
    if (grad_weights) {
      ConstMatrixMap<Real> x(input.raw() + i * in_stride, cin, h * w_in);
      MatrixMap<Real> dw(grad_weights->raw(), cin, g.patch_rows());
      dw.noalias() += x * col.transpose();
    }
  }
}

}  // namespace fdd::kernels
