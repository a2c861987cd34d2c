#pragma once

// Convolutional denoising autoencoder: stride-2 3x3 conv encoder, a dense
// latent head, and a mirrored transposed-conv decoder ending in tanh.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdd/adam.hpp"
#include "fdd/autodiff.hpp"
#include "fdd/error.hpp"
#include "fdd/features.hpp"
#include "fdd/hash.hpp"
#include "fdd/image.hpp"
#include "fdd/kernels.hpp"
#include "fdd/rng.hpp"
#include "fdd/tensor.hpp"

namespace fdd {

inline constexpr std::size_t kDaeStride = 2;
inline constexpr std::size_t kDaePadding = 1;

struct DaeConfig {
  ImageShape input{64, 64, 1};
  std::vector<std::size_t> encoder_channels{16, 32, 64};
  std::size_t latent_dim = 128;

  static DaeConfig desk() { return {}; }
  /// The ImageNet-scale architecture: 299x299x3 in, 2048-d latent.
  static DaeConfig imagenet() {
    return {{299, 299, 3}, {32, 64, 128, 256, 512}, 2048};
  }
  /// Target-dataset variant used for single-domain training.
  static DaeConfig target_dataset() {
    return {{256, 256, 1}, {32, 64, 128, 256, 512}, 64};
  }

  friend bool operator==(const DaeConfig&, const DaeConfig&) = default;
};

/// Shapes derived from a DaeConfig.
struct DaeArchitecture {
  /// Spatial extent after each encoder conv, input first: 64, 32, 16, 8.
  std::vector<std::size_t> heights, widths;
  /// output_padding of decoder layer i (decoder layer 0 undoes the last
  /// encoder conv).
  std::vector<std::size_t> output_padding_h, output_padding_w;
  std::size_t flat_size = 0;

  std::size_t final_height() const { return heights.back(); }
  std::size_t final_width() const { return widths.back(); }
};

/// Validates the config and solves the decoder's output paddings so the
/// decoder reproduces every encoder extent exactly.
inline DaeArchitecture plan_dae(const DaeConfig& cfg) {
  if (cfg.input.height == 0 || cfg.input.width == 0 || cfg.input.channels == 0)
    throw ConfigError("dae: input shape must be positive");
  if (cfg.encoder_channels.empty())
    throw ConfigError("dae: at least one encoder layer is required");
  if (cfg.latent_dim == 0) throw ConfigError("dae: latent_dim must be > 0");
  for (std::size_t c : cfg.encoder_channels)
    if (c == 0) throw ConfigError("dae: encoder channel counts must be > 0");

  DaeArchitecture arch;
  arch.heights.push_back(cfg.input.height);
  arch.widths.push_back(cfg.input.width);
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    const std::size_t h =
        kernels::conv_output_extent(arch.heights.back(), kDaeStride, kDaePadding);
    const std::size_t w =
        kernels::conv_output_extent(arch.widths.back(), kDaeStride, kDaePadding);
    if (h == 0 || w == 0) {
      throw ConfigError("dae: input " + std::to_string(cfg.input.height) + "x" +
                        std::to_string(cfg.input.width) +
                        " is too small for " +
                        std::to_string(cfg.encoder_channels.size()) +
                        " stride-2 layers");
    }
    arch.heights.push_back(h);
    arch.widths.push_back(w);
  }
  auto solve = [](std::size_t in, std::size_t target) -> std::size_t {
    const std::size_t base =
        kernels::transposed_output_extent(in, kDaeStride, kDaePadding, 0);
    if (target < base || target - base >= kDaeStride) {
      throw ConfigError("dae: transposed conv cannot recover extent " +
                        std::to_string(target) + " from " + std::to_string(in));
    }
    return target - base;
  };
  for (std::size_t i = cfg.encoder_channels.size(); i-- > 0;) {
    arch.output_padding_h.push_back(solve(arch.heights[i + 1], arch.heights[i]));
    arch.output_padding_w.push_back(solve(arch.widths[i + 1], arch.widths[i]));
  }
  arch.flat_size =
      cfg.encoder_channels.back() * arch.final_height() * arch.final_width();
  return arch;
}

template <class Real>
class BasicDae {
 public:
  BasicDae(DaeConfig config, ParameterBlock<Real> params,
           std::vector<double> history = {})
      : config_(std::move(config)),
        arch_(plan_dae(config_)),
        params_(std::move(params)),
        history_(std::move(history)) {}

  const DaeConfig& config() const noexcept { return config_; }
  const DaeArchitecture& architecture() const noexcept { return arch_; }
  ParameterBlock<Real>& params() noexcept { return params_; }
  const ParameterBlock<Real>& params() const noexcept { return params_; }
  std::vector<double>& history() noexcept { return history_; }
  const std::vector<double>& history() const noexcept { return history_; }
  std::size_t encoder_layers() const { return config_.encoder_channels.size(); }
  std::size_t latent_dim() const { return config_.latent_dim; }

  /// Layer ids accepted by activation capture, e.g. "enc0".."enc2".
  std::vector<std::string> encoder_layer_ids() const {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < encoder_layers(); ++i)
      ids.push_back("enc" + std::to_string(i));
    return ids;
  }

  /// SHA-256 over the architecture and encoder parameters; identifies the
  /// feature extractor independently of decoder and optimizer state.
  Digest encoder_digest() const {
    Sha256 h;
    h.update(config_string());
    for (const auto& p : params_) {
      if (p.name.rfind("enc", 0) != 0) continue;
      h.update(p.name);
      for (Real v : p.value.data()) {
        const float f = static_cast<float>(v);
        h.update(&f, sizeof f);
      }
    }
    return h.finish();
  }

  std::string config_string() const {
    std::string s = "dae:" + std::to_string(config_.input.height) + "x" +
                    std::to_string(config_.input.width) + "x" +
                    std::to_string(config_.input.channels) + ";channels=";
    for (std::size_t i = 0; i < config_.encoder_channels.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(config_.encoder_channels[i]);
    }
    return s + ";latent=" + std::to_string(config_.latent_dim);
  }

 private:
  DaeConfig config_;
  DaeArchitecture arch_;
  ParameterBlock<Real> params_;
  std::vector<double> history_;
};

using Dae = BasicDae<float>;

namespace detail {

template <class Real>
BasicTensor<Real> glorot_uniform(Shape shape, std::size_t fan_in,
                                 std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  BasicTensor<Real> t(std::move(shape));
  for (Real& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

}  // namespace detail

/// Allocates and initializes every parameter. Weights are uniform in
/// +-sqrt(6 / (fan_in + fan_out)), biases zero.
template <class Real = float>
BasicDae<Real> build_dae(const DaeConfig& cfg, std::uint64_t seed) {
  const DaeArchitecture arch = plan_dae(cfg);
  Rng rng = make_rng(seed);
  ParameterBlock<Real> params;
  const auto& ch = cfg.encoder_channels;
  const std::size_t k2 = kernels::kKernel * kernels::kKernel;
  std::size_t in_c = cfg.input.channels;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const std::string id = "enc" + std::to_string(i);
    params.add(id + ".weight",
               detail::glorot_uniform<Real>({ch[i], in_c, 3, 3}, in_c * k2,
                                            ch[i] * k2, rng));
    params.add(id + ".bias", BasicTensor<Real>({ch[i]}));
    in_c = ch[i];
  }
  params.add("enc_proj.weight",
             detail::glorot_uniform<Real>({cfg.latent_dim, arch.flat_size},
                                          arch.flat_size, cfg.latent_dim, rng));
  params.add("enc_proj.bias", BasicTensor<Real>({cfg.latent_dim}));
  params.add("dec_proj.weight",
             detail::glorot_uniform<Real>({arch.flat_size, cfg.latent_dim},
                                          cfg.latent_dim, arch.flat_size, rng));
  params.add("dec_proj.bias", BasicTensor<Real>({arch.flat_size}));
  for (std::size_t j = 0; j < ch.size(); ++j) {
    const std::size_t from = ch[ch.size() - 1 - j];
    const std::size_t to =
        j + 1 < ch.size() ? ch[ch.size() - 2 - j] : cfg.input.channels;
    const std::string id = "dec" + std::to_string(j);
    params.add(id + ".weight",
               detail::glorot_uniform<Real>({from, to, 3, 3}, from * k2,
                                            to * k2, rng));
    params.add(id + ".bias", BasicTensor<Real>({to}));
  }
  return BasicDae<Real>(cfg, std::move(params));
}

/// Tape handles for every parameter of a model, in declaration order.
template <class Real>
std::vector<ad::Var> bind_parameters(ad::Tape<Real>& tape,
                                     const BasicDae<Real>& model,
                                     bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(model.params().size());
  for (const auto& p : model.params())
    vars.push_back(trainable ? tape.parameter(p.value) : tape.constant(p.value));
  return vars;
}

template <class Real>
struct EncoderGraph {
  ad::Var latent;
  std::vector<ad::Var> conv_outputs;  // post-ReLU output of enc0..encL-1
};

inline constexpr std::size_t kNoTap = static_cast<std::size_t>(-1);

/// Records the encoder on the tape. x is an NCHW batch. If tap_layer names
/// an encoder layer, its output is re-entered as a differentiable leaf so
/// gradients can be read there even when nothing upstream needs them.
template <class Real>
EncoderGraph<Real> encoder_graph(ad::Tape<Real>& tape,
                                 const BasicDae<Real>& model,
                                 const std::vector<ad::Var>& params, ad::Var x,
                                 std::size_t tap_layer = kNoTap) {
  const std::size_t layers = model.encoder_layers();
  EncoderGraph<Real> g;
  ad::Var h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    h = ad::conv2d(tape, h, params[2 * i], params[2 * i + 1],
                   {kDaeStride, kDaePadding});
    h = ad::relu(tape, h);
    if (i == tap_layer) h = tape.parameter(tape.value(h));
    g.conv_outputs.push_back(h);
  }
  h = ad::flatten(tape, h);
  g.latent = ad::linear(tape, h, params[2 * layers], params[2 * layers + 1]);
  return g;
}

template <class Real>
ad::Var decoder_graph(ad::Tape<Real>& tape, const BasicDae<Real>& model,
                      const std::vector<ad::Var>& params, ad::Var latent) {
  const std::size_t layers = model.encoder_layers();
  const auto& arch = model.architecture();
  const auto& ch = model.config().encoder_channels;
  const std::size_t base = 2 * layers + 2;
  ad::Var h = ad::linear(tape, latent, params[base], params[base + 1]);
  h = ad::relu(tape, h);
  const std::size_t n = tape.value(h).dim(0);
  h = ad::reshape(tape, h,
                  Shape{n, ch.back(), arch.final_height(), arch.final_width()});
  for (std::size_t j = 0; j < layers; ++j) {
    h = ad::conv2d_transpose(tape, h, params[base + 2 + 2 * j],
                             params[base + 3 + 2 * j],
                             {kDaeStride, kDaePadding, arch.output_padding_h[j],
                              arch.output_padding_w[j]});
    h = j + 1 < layers ? ad::relu(tape, h) : ad::tanh(tape, h);
  }
  return h;
}

namespace detail {

template <class Real>
void require_input_shape(const BasicDae<Real>& model,
                         std::span<const Image> images) {
  for (const Image& img : images) {
    if (shape_of(img) != model.config().input) {
      throw InputError("image of shape " + std::to_string(img.height) + "x" +
                       std::to_string(img.width) + "x" +
                       std::to_string(img.channels) +
                       " does not match the model input " +
                       model.config_string());
    }
  }
}

inline constexpr std::size_t kInferenceChunk = 64;

}  // namespace detail

/// Maps images to latent vectors. No noise is added; the image is encoded
/// as given.
template <class Real>
FeatureSet encode(const BasicDae<Real>& model, std::span<const Image> images) {
  if (images.empty()) throw InputError("encode: no images");
  detail::require_input_shape(model, images);
  FeatureSet out(static_cast<Eigen::Index>(images.size()),
                 static_cast<Eigen::Index>(model.latent_dim()));
  for (std::size_t start = 0; start < images.size();
       start += detail::kInferenceChunk) {
    const std::size_t count =
        std::min(detail::kInferenceChunk, images.size() - start);
    ad::Tape<Real> tape;
    const auto params = bind_parameters(tape, model, false);
    ad::Var x = tape.constant(to_batch<Real>(images.subspan(start, count)));
    const auto& z = tape.value(encoder_graph(tape, model, params, x).latent);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < model.latent_dim(); ++j)
        out(static_cast<Eigen::Index>(start + i), static_cast<Eigen::Index>(j)) =
            static_cast<double>(z[i * model.latent_dim() + j]);
  }
  return out;
}

/// D(E(x)) for each image.
template <class Real>
std::vector<Image> reconstruct(const BasicDae<Real>& model,
                               std::span<const Image> images) {
  detail::require_input_shape(model, images);
  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size();
       start += detail::kInferenceChunk) {
    const std::size_t count =
        std::min(detail::kInferenceChunk, images.size() - start);
    ad::Tape<Real> tape;
    const auto params = bind_parameters(tape, model, false);
    ad::Var x = tape.constant(to_batch<Real>(images.subspan(start, count)));
    ad::Var z = encoder_graph(tape, model, params, x).latent;
    const auto& y = tape.value(decoder_graph(tape, model, params, z));
    for (std::size_t i = 0; i < count; ++i) out.push_back(from_batch(y, i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct NoiseSpec {
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

struct TrainingConfig {
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t max_epochs = 1000;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  /// Fraction of the dataset held out for monitoring; 0 monitors the
  /// training loss.
  double validation_fraction = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void validate(const NoiseSpec& noise) {
  if (!(noise.sigma >= 0)) throw InputError("noise sigma must be >= 0");
}

inline void validate(const TrainingConfig& tc) {
  if (tc.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (tc.patience < 1) throw ConfigError("patience must be >= 1");
  if (!(tc.lr > 0)) throw ConfigError("lr must be > 0");
  if (!(tc.validation_fraction >= 0 && tc.validation_fraction < 1))
    throw ConfigError("validation_fraction must be in [0, 1)");
}

/// Tracks the best monitored loss and decides when to stop.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience,
                         double best = std::numeric_limits<double>::infinity())
      : patience_(patience), best_(best) {}

  /// Returns true if this epoch's loss is a new best.
  bool observe(double loss) {
    ++epochs_;
    if (loss < best_) {
      best_ = loss;
      best_epoch_ = epochs_ - 1;
      return true;
    }
    return false;
  }

  bool should_stop() const {
    return epochs_ > 0 && (epochs_ - 1) - best_epoch_ >= patience_;
  }
  double best_loss() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  double best_;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
};

struct TrainingResult {
  std::vector<double> history;  // monitored loss per epoch run in this call
  std::size_t best_epoch = 0;   // index into history
  double best_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Generic epoch loop: calls run_epoch(epoch) until max_epochs or until the
/// loss has not improved for `patience` epochs. on_best fires whenever a
/// new best is observed.
inline TrainingResult run_epochs(std::size_t max_epochs, std::size_t patience,
                                 const std::function<double(std::size_t)>& run_epoch,
                                 const std::function<void(std::size_t)>& on_best = {}) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
  TrainingResult result;
  EarlyStopping stop(patience);
  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    const double loss = run_epoch(epoch);
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(loss);
    if (stop.observe(loss) && on_best) on_best(epoch);
    if (stop.should_stop()) {
      result.stopped_early = epoch + 1 < max_epochs;
      break;
    }
  }
  result.best_epoch = stop.best_epoch();
  result.best_loss = stop.best_loss();
  return result;
}

/// Adds N(0, sigma^2) noise to an image; the noisy copy is not clamped.
inline Image add_training_noise(const Image& img, double sigma,
                                std::uint64_t seed) {
  Image out = img;
  if (sigma == 0) return out;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : out.pixels) v += dist(rng);
  return out;
}

/// MSE between D(E(noisy)) and the clean batch: the denoising objective.
template <class Real>
double denoising_loss(const BasicDae<Real>& model, std::span<const Image> clean,
                      std::span<const Image> noisy) {
  ad::Tape<Real> tape;
  const auto params = bind_parameters(tape, model, false);
  ad::Var x = tape.constant(to_batch<Real>(noisy));
  ad::Var target = tape.constant(to_batch<Real>(clean));
  ad::Var z = encoder_graph(tape, model, params, x).latent;
  ad::Var loss =
      ad::mse_loss(tape, decoder_graph(tape, model, params, z), target);
  return static_cast<double>(tape.value(loss)[0]);
}

/// One optimizer step on a batch; returns the batch loss before the update.
template <class Real>
double train_step(BasicDae<Real>& model, std::span<const Image> clean,
                  std::span<const Image> noisy, const AdamOptions& adam) {
  ad::Tape<Real> tape;
  const auto params = bind_parameters(tape, model, true);
  ad::Var x = tape.constant(to_batch<Real>(noisy));
  ad::Var target = tape.constant(to_batch<Real>(clean));
  ad::Var z = encoder_graph(tape, model, params, x).latent;
  ad::Var loss =
      ad::mse_loss(tape, decoder_graph(tape, model, params, z), target);
  const double value = static_cast<double>(tape.value(loss)[0]);
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite training loss");
  }
  tape.backward(loss);
  std::vector<BasicTensor<Real>> grads;
  grads.reserve(params.size());
  for (ad::Var v : params) grads.push_back(tape.grad(v));
  adam_step(model.params(), std::span<const BasicTensor<Real>>(grads), adam);
  return value;
}

/// Minimizes MSE(x, D(E(x + eta))) with fresh noise per image per epoch.
/// On return the model holds the best parameters seen (lowest monitored
/// loss). A non-finite loss restores that checkpoint and rethrows.
template <class Real>
TrainingResult train_dae(BasicDae<Real>& model, std::span<const Image> dataset,
                         const NoiseSpec& noise, const TrainingConfig& tc,
                         const std::function<void(std::size_t, double)>& progress = {}) {
  if (dataset.empty()) throw InputError("train_dae: empty dataset");
  validate(noise);
  validate(tc);
  detail::require_input_shape(model, dataset);
  for (const Image& img : dataset)
    for (double v : img.pixels)
      if (!(v >= -1.0 && v <= 1.0))
        throw InputError("train_dae: pixel values must lie in [-1, 1]");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = make_rng(derive_seed(tc.seed, {0xda7a}));
  std::shuffle(order.begin(), order.end(), split_rng);
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(tc.validation_fraction * static_cast<double>(dataset.size())));
  if (n_val > 0 && n_val == dataset.size())
    throw ConfigError("validation split leaves no training data");
  std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
  std::vector<std::size_t> val_idx(order.end() - n_val, order.end());

  std::vector<Image> val_clean, val_noisy;
  for (std::size_t k = 0; k < val_idx.size(); ++k) {
    val_clean.push_back(dataset[val_idx[k]]);
    val_noisy.push_back(add_training_noise(
        dataset[val_idx[k]], noise.sigma, derive_seed(noise.seed, {1, k})));
  }

  const AdamOptions adam{tc.lr, tc.beta1, tc.beta2, tc.eps};
  // Epochs already in the history shift the noise and shuffle streams so a
  // resumed run does not replay the same draws.
  const std::size_t epoch_offset = model.history().size();
  ParameterBlock<Real> best = model.params();

  auto run_epoch = [&](std::size_t epoch) {
    const std::size_t global_epoch = epoch_offset + epoch;
    Rng rng = make_rng(derive_seed(tc.seed, {2, global_epoch}));
    std::vector<std::size_t> perm = train_idx;
    std::shuffle(perm.begin(), perm.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < perm.size(); start += tc.batch_size) {
      const std::size_t count = std::min(tc.batch_size, perm.size() - start);
      std::vector<Image> clean, noisy;
      clean.reserve(count);
      noisy.reserve(count);
      for (std::size_t k = start; k < start + count; ++k) {
        clean.push_back(dataset[perm[k]]);
        noisy.push_back(add_training_noise(
            dataset[perm[k]], noise.sigma,
            derive_seed(noise.seed, {0, global_epoch, perm[k]})));
      }
      total += train_step<Real>(model, clean, noisy, adam) *
               static_cast<double>(count);
    }
    double monitored = total / static_cast<double>(perm.size());
    if (!val_clean.empty()) monitored = denoising_loss(model, val_clean, val_noisy);
    model.history().push_back(monitored);
    if (progress) progress(global_epoch, monitored);
    return monitored;
  };

  try {
    TrainingResult r = run_epochs(tc.max_epochs, tc.patience, run_epoch,
                                  [&](std::size_t) { best = model.params(); });
    model.params() = std::move(best);
    return r;
  } catch (const NumericalError& e) {
    model.params() = std::move(best);
    throw NumericalError(std::string("training aborted, best checkpoint kept: ") +
                         e.what());
  }
}

}  // namespace fdd
