#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdd/error.hpp"
#include "fdd/tensor.hpp"

namespace fdd {

/// H x W x C image with interleaved channels and values in [-1, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;  // (y * width + x) * channels + c

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

enum class PixelScale { unit, byte };

/// Decoded image before normalization; values in [0, 1] or [0, 255].
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;
  PixelScale scale = PixelScale::byte;
};

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

inline ImageShape shape_of(const Image& img) {
  return {img.height, img.width, img.channels};
}

/// Bilinear resampling of one plane with half-pixel centers and edge clamp.
inline std::vector<double> resize_bilinear(std::span<const double> plane,
                                           std::size_t h, std::size_t w,
                                           std::size_t out_h,
                                           std::size_t out_w) {
  std::vector<double> out(out_h * out_w);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  auto source = [](double pos, std::size_t extent, std::size_t& i0,
                   std::size_t& i1, double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(pos);
    i1 = std::min(i0 + 1, extent - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    source((static_cast<double>(y) + 0.5) * sy - 0.5, h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      source((static_cast<double>(x) + 0.5) * sx - 0.5, w, x0, x1, fx);
      const double top = plane[y0 * w + x0] * (1 - fx) + plane[y0 * w + x1] * fx;
      const double bot = plane[y1 * w + x0] * (1 - fx) + plane[y1 * w + x1] * fx;
      out[y * out_w + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

namespace detail {

/// Channel adaptation on interleaved data: gray replicates, RGB(A) collapses
/// to Rec.601 luma, alpha is dropped.
inline std::vector<std::vector<double>> adapt_planes(
    std::span<const double> values, std::size_t h, std::size_t w,
    std::size_t channels, std::size_t target_channels) {
  const std::size_t n = h * w;
  auto plane = [&](std::size_t c) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = values[i * channels + c];
    return p;
  };
  const bool color = channels >= 3;
  std::vector<std::vector<double>> out;
  if (target_channels == 1) {
    if (!color) {
      out.push_back(plane(0));
    } else {
      std::vector<double> luma(n);
      for (std::size_t i = 0; i < n; ++i) {
        luma[i] = 0.299 * values[i * channels] +
                  0.587 * values[i * channels + 1] +
                  0.114 * values[i * channels + 2];
      }
      out.push_back(std::move(luma));
    }
  } else {
    for (std::size_t c = 0; c < target_channels; ++c)
      out.push_back(plane(color ? std::min<std::size_t>(c, 2) : 0));
  }
  return out;
}

inline Image assemble(std::vector<std::vector<double>> planes, std::size_t h,
                      std::size_t w, const ImageShape& target, double scale,
                      double offset) {
  Image img(target.height, target.width, target.channels);
  for (std::size_t c = 0; c < planes.size(); ++c) {
    std::vector<double> resized =
        (h == target.height && w == target.width)
            ? std::move(planes[c])
            : resize_bilinear(planes[c], h, w, target.height, target.width);
    for (std::size_t i = 0; i < resized.size(); ++i) {
      img.pixels[i * target.channels + c] =
          std::clamp(resized[i] * scale + offset, -1.0, 1.0);
    }
  }
  return img;
}

}  // namespace detail

/// Normalizes a decoded image to the target shape: channel adaptation,
/// bilinear resize, then a linear map of the pixel range onto [-1, 1].
inline Image preprocess(const RawImage& raw, const ImageShape& target) {
  if (raw.height == 0 || raw.width == 0 || raw.channels == 0 ||
      raw.values.empty()) {
    throw InputError("preprocess: zero-sized image");
  }
  if (raw.values.size() != raw.height * raw.width * raw.channels) {
    detail::throw_dimension("preprocess: pixel buffer does not match extents");
  }
  if (target.height == 0 || target.width == 0 || target.channels == 0) {
    throw ConfigError("preprocess: zero-sized target shape");
  }
  const double scale = raw.scale == PixelScale::byte ? 2.0 / 255.0 : 2.0;
  return detail::assemble(
      detail::adapt_planes(raw.values, raw.height, raw.width, raw.channels,
                           target.channels),
      raw.height, raw.width, target, scale, -1.0);
}

/// Same adaptation for an image already in [-1, 1]; identity when the shape
/// already matches.
inline Image conform(const Image& img, const ImageShape& target) {
  if (shape_of(img) == target) return img;
  if (img.size() == 0) throw InputError("conform: zero-sized image");
  return detail::assemble(
      detail::adapt_planes(img.pixels, img.height, img.width, img.channels,
                           target.channels),
      img.height, img.width, target, 1.0, 0.0);
}

/// Stacks images into an NCHW tensor.
template <class Real>
BasicTensor<Real> to_batch(std::span<const Image> images) {
  if (images.empty()) throw InputError("to_batch: empty image list");
  const ImageShape s = shape_of(images.front());
  BasicTensor<Real> out({images.size(), s.channels, s.height, s.width});
  const std::size_t plane = s.height * s.width;
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (shape_of(images[n]) != s) {
      detail::throw_dimension("to_batch: images have different shapes");
    }
    Real* dst = out.raw() + n * s.channels * plane;
    const auto& px = images[n].pixels;
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        dst[c * plane + i] = static_cast<Real>(px[i * s.channels + c]);
  }
  return out;
}

/// Inverse of to_batch for one batch item.
template <class Real>
Image from_batch(const BasicTensor<Real>& batch, std::size_t n) {
  const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Image img(h, w, c);
  const Real* src = batch.raw() + n * c * h * w;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i)
      img.pixels[i * c + ch] = static_cast<double>(src[ch * h * w + i]);
  return img;
}

inline double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) detail::throw_dimension("mse: image shapes differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

}  // namespace fdd
