#pragma once

// Grad-CAM on the DAE encoder. The objective is the scalar
// ||mu_w||^2 + Tr(Sigma_w) of the batch's latent vectors; its gradient at an
// encoder layer weights that layer's channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "fdd/autodiff.hpp"
#include "fdd/dae.hpp"
#include "fdd/error.hpp"
#include "fdd/image.hpp"

namespace fdd {

struct AttentionMap {
  std::string layer;
  std::size_t height = 0, width = 0;  // raw grid
  std::vector<double> raw;            // signed, row-major
  std::size_t image_height = 0, image_width = 0;
  std::vector<double> upsampled;      // bilinear, image_height x image_width
};

/// Resolves "enc<i>" or "last" to an encoder layer index.
template <class Real>
std::size_t resolve_layer(const BasicDae<Real>& model, const std::string& id) {
  if (id == "last") return model.encoder_layers() - 1;
  const auto ids = model.encoder_layer_ids();
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) {
    std::string known;
    for (const auto& s : ids) known += (known.empty() ? "" : ", ") + s;
    throw InputError("unknown encoder layer '" + id + "' (known: " + known +
                     ", last)");
  }
  return static_cast<std::size_t>(it - ids.begin());
}

/// Runs the encoder from the output of layer `from` (post-ReLU) to the
/// latent vectors.
template <class Real>
ad::Var encoder_tail(ad::Tape<Real>& tape, const BasicDae<Real>& model,
                     const std::vector<ad::Var>& params, ad::Var h,
                     std::size_t from) {
  const std::size_t layers = model.encoder_layers();
  for (std::size_t i = from + 1; i < layers; ++i) {
    h = ad::conv2d(tape, h, params[2 * i], params[2 * i + 1],
                   {kDaeStride, kDaePadding});
    h = ad::relu(tape, h);
  }
  h = ad::flatten(tape, h);
  return ad::linear(tape, h, params[2 * layers], params[2 * layers + 1]);
}

/// Layer activations and the objective's gradient there, both NCHW.
template <class Real>
struct LayerGradient {
  BasicTensor<Real> activation;
  BasicTensor<Real> gradient;
  double objective = 0;
};

template <class Real>
LayerGradient<Real> spread_gradient(const BasicDae<Real>& model,
                                    std::span<const Image> images,
                                    std::size_t layer) {
  if (images.size() < 2)
    throw InputError("gradcam: need a batch of at least 2 images");
  if (layer >= model.encoder_layers())
    throw InputError("gradcam: layer index out of range");
  detail::require_input_shape(model, images);
  ad::Tape<Real> tape;
  const auto params = bind_parameters(tape, model, false);
  ad::Var x = tape.constant(to_batch<Real>(images));
  const auto g = encoder_graph(tape, model, params, x, layer);
  ad::Var obj = ad::latent_spread(tape, g.latent);
  tape.backward(obj);
  const ad::Var tapped = g.conv_outputs[layer];
  return {tape.value(tapped), tape.grad(tapped),
          static_cast<double>(tape.value(obj)[0])};
}

/// One map per image. Channel weights are the spatial mean of the gradient
/// for that image; the map is the signed weighted channel sum.
template <class Real>
std::vector<AttentionMap> gradcam(const BasicDae<Real>& model,
                                  std::span<const Image> images,
                                  const std::string& layer_id) {
  const std::size_t layer = resolve_layer(model, layer_id);
  const auto lg = spread_gradient(model, images, layer);
  const std::size_t n = lg.activation.dim(0), c = lg.activation.dim(1);
  const std::size_t h = lg.activation.dim(2), w = lg.activation.dim(3);
  const std::size_t hw = h * w;
  const auto& in = model.config().input;
  std::vector<AttentionMap> maps;
  maps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    AttentionMap m;
    m.layer = model.encoder_layer_ids()[layer];
    m.height = h;
    m.width = w;
    m.raw.assign(hw, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t base = (i * c + k) * hw;
      double weight = 0;
      for (std::size_t p = 0; p < hw; ++p)
        weight += static_cast<double>(lg.gradient[base + p]);
      weight /= static_cast<double>(hw);
      for (std::size_t p = 0; p < hw; ++p)
        m.raw[p] += weight * static_cast<double>(lg.activation[base + p]);
    }
    m.image_height = in.height;
    m.image_width = in.width;
    m.upsampled = resize_bilinear(m.raw, h, w, in.height, in.width);
    maps.push_back(std::move(m));
  }
  return maps;
}

inline std::string attention_csv(const AttentionMap& m) {
  std::string out;
  char buf[32];
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      std::snprintf(buf, sizeof buf, "%.9g", m.raw[y * m.width + x]);
      out += (x ? "," : "");
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Blue-white-red colour for v in [-1, 1].
inline void diverging_color(double v, double rgb[3]) {
  v = std::clamp(v, -1.0, 1.0);
  if (v >= 0) {
    rgb[0] = 1.0;
    rgb[1] = rgb[2] = 1.0 - v;
  } else {
    rgb[0] = rgb[1] = 1.0 + v;
    rgb[2] = 1.0;
  }
}

/// 8-bit RGB overlay of the upsampled map on the image's luminance. The map
/// is scaled by its largest magnitude so zero stays white.
inline RawImage attention_overlay(const Image& img, const AttentionMap& m,
                                  double opacity = 0.6) {
  if (img.height != m.image_height || img.width != m.image_width)
    detail::throw_dimension("attention_overlay: image does not match the map");
  double peak = 0;
  for (double v : m.upsampled) peak = std::max(peak, std::abs(v));
  RawImage out{img.height, img.width, 3,
               std::vector<double>(img.height * img.width * 3),
               PixelScale::byte};
  for (std::size_t p = 0; p < img.height * img.width; ++p) {
    double gray = 0;
    for (std::size_t c = 0; c < img.channels; ++c)
      gray += img.pixels[p * img.channels + c];
    gray = (gray / static_cast<double>(img.channels) + 1.0) / 2.0;
    double rgb[3];
    diverging_color(peak > 0 ? m.upsampled[p] / peak : 0.0, rgb);
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = (1 - opacity) * gray + opacity * rgb[c];
      out.values[p * 3 + c] = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    }
  }
  return out;
}

}  // namespace fdd
