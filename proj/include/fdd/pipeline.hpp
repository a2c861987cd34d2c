#pragma once

// Encoder + critic assembly: preprocess -> encode -> distance.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fdd/critics.hpp"
#include "fdd/dae.hpp"
#include "fdd/error.hpp"
#include "fdd/features.hpp"
#include "fdd/hash.hpp"
#include "fdd/image.hpp"

namespace fdd {

/// Feature extractor seen by the metric pipeline.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual FeatureSet encode(std::span<const Image> images) const = 0;
  virtual ImageShape input_shape() const = 0;
  virtual std::size_t latent_dim() const = 0;
  /// Stable hex identity; part of every cache key and config hash.
  virtual std::string identity() const = 0;
};

template <class Real>
class DaeEncoder final : public Encoder {
 public:
  explicit DaeEncoder(std::shared_ptr<const BasicDae<Real>> model)
      : model_(std::move(model)), identity_(to_hex(model_->encoder_digest())) {}

  FeatureSet encode(std::span<const Image> images) const override {
    return fdd::encode(*model_, images);
  }
  ImageShape input_shape() const override { return model_->config().input; }
  std::size_t latent_dim() const override { return model_->latent_dim(); }
  std::string identity() const override { return identity_; }
  const BasicDae<Real>& model() const { return *model_; }

 private:
  std::shared_ptr<const BasicDae<Real>> model_;
  std::string identity_;
};

template <class Real>
std::shared_ptr<const Encoder> make_encoder(BasicDae<Real> model) {
  return std::make_shared<DaeEncoder<Real>>(
      std::make_shared<const BasicDae<Real>>(std::move(model)));
}

enum class Critic { frechet, mmd2_poly, topology };

inline const char* to_string(Critic c) {
  switch (c) {
    case Critic::frechet: return "frechet";
    case Critic::mmd2_poly: return "mmd2_poly";
    case Critic::topology: return "topology";
  }
  return "?";
}

struct MetricSpec {
  std::string name = "fdd";
  std::shared_ptr<const Encoder> encoder;
  Critic critic = Critic::frechet;
  std::string profile = "bilinear";
  std::uint64_t seed = 0;
  /// Subsample the larger set (seeded, without replacement) to the smaller
  /// set's size before scoring.
  bool matched_n = false;
  PolynomialKernel kernel;
  double topology_p = 2.0;
};

/// fdd / kdd / tdd over the given encoder.
inline MetricSpec metric_by_name(const std::string& name,
                                 std::shared_ptr<const Encoder> encoder,
                                 std::uint64_t seed = 0) {
  MetricSpec s;
  s.name = name;
  s.encoder = std::move(encoder);
  s.seed = seed;
  if (name == "fdd") {
    s.critic = Critic::frechet;
  } else if (name == "kdd") {
    s.critic = Critic::mmd2_poly;
  } else if (name == "tdd") {
    s.critic = Critic::topology;
  } else {
    throw InputError("unknown metric '" + name + "' (expected fdd, kdd or tdd)");
  }
  return s;
}

inline std::string format_real(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// Canonical text form; its SHA-256 is the config hash of every report.
inline std::string canonical_string(const MetricSpec& s) {
  std::string out = "metric=" + s.name + ";critic=" + to_string(s.critic) +
                    ";encoder=" + (s.encoder ? s.encoder->identity() : "none") +
                    ";profile=" + s.profile + ";seed=" + std::to_string(s.seed) +
                    ";matched_n=" + (s.matched_n ? "1" : "0");
  if (s.critic == Critic::mmd2_poly) {
    out += ";kernel=poly(" + std::to_string(s.kernel.degree) + "," +
           (s.kernel.gamma > 0 ? format_real(s.kernel.gamma) : "1/D") + "," +
           format_real(s.kernel.coef) + ")";
  }
  if (s.critic == Critic::topology) out += ";p=" + format_real(s.topology_p);
  return out;
}

inline std::string config_hash(const MetricSpec& s) {
  return sha256_hex(canonical_string(s)).substr(0, 16);
}

struct MetricReport {
  std::string metric;
  std::string label;  // pair label in matrix evaluations
  double score = 0;
  std::size_t n_real = 0;
  std::size_t n_gen = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_time_s = 0;
};

/// Per-image latent rows keyed by (encoder identity, image content hash).
/// Safe for concurrent use; identical keys simply overwrite.
class FeatureCache {
 public:
  FeatureSet features(const Encoder& encoder, std::span<const Image> images) {
    const ImageShape shape = encoder.input_shape();
    const std::string enc = encoder.identity();
    std::vector<std::string> keys;
    keys.reserve(images.size());
    std::vector<Image> missing;
    std::vector<std::size_t> missing_at;
    {
      std::lock_guard lock(mutex_);
      for (std::size_t i = 0; i < images.size(); ++i) {
        keys.push_back(enc + ':' + image_key(images[i]));
        if (!rows_.contains(keys.back())) {
          missing.push_back(conform(images[i], shape));
          missing_at.push_back(i);
        }
      }
    }
    if (!missing.empty()) {
      // Within one request an image may appear twice; encode it once.
      std::vector<Image> unique;
      std::vector<std::size_t> unique_at;
      std::map<std::string, std::size_t> seen;
      for (std::size_t k = 0; k < missing.size(); ++k) {
        if (seen.emplace(keys[missing_at[k]], unique.size()).second) {
          unique.push_back(std::move(missing[k]));
          unique_at.push_back(missing_at[k]);
        }
      }
      const FeatureSet fresh = encoder.encode(unique);
      std::lock_guard lock(mutex_);
      encoded_ += unique.size();
      for (std::size_t k = 0; k < unique.size(); ++k) {
        const auto row = fresh.row(static_cast<Eigen::Index>(k));
        rows_[keys[unique_at[k]]] = std::vector<double>(row.begin(), row.end());
      }
    }
    FeatureSet out(static_cast<Eigen::Index>(images.size()),
                   static_cast<Eigen::Index>(encoder.latent_dim()));
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& row = rows_.at(keys[i]);
      for (std::size_t j = 0; j < row.size(); ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return out;
  }

  /// Number of images passed to an encoder so far.
  std::size_t encoded_images() const {
    std::lock_guard lock(mutex_);
    return encoded_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return rows_.size();
  }

  static std::string image_key(const Image& img) {
    Sha256 h;
    const std::uint64_t dims[3] = {img.height, img.width, img.channels};
    h.update(dims, sizeof dims);
    h.update(std::span<const double>(img.pixels));
    return to_hex(h.finish());
  }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> rows_;
  std::size_t encoded_ = 0;
};

/// Applies a critic to two feature sets.
inline double score_features(const MetricSpec& spec, const FeatureSet& real,
                             const FeatureSet& gen) {
  const FeatureSet* a = &real;
  const FeatureSet* b = &gen;
  FeatureSet ra, rb;
  if (spec.matched_n && real.rows() != gen.rows()) {
    const auto n = static_cast<std::size_t>(std::min(real.rows(), gen.rows()));
    ra = subsample_rows(real, n, derive_seed(spec.seed, {0x5a, 0}));
    rb = subsample_rows(gen, n, derive_seed(spec.seed, {0x5a, 1}));
    a = &ra;
    b = &rb;
  }
  switch (spec.critic) {
    case Critic::frechet: return frechet_distance(*a, *b);
    case Critic::mmd2_poly: return mmd2_poly(*a, *b, spec.kernel);
    case Critic::topology:
      return topology_distance(*a, *b, spec.topology_p, spec.seed);
  }
  throw InputError("unknown critic");
}

/// Scores one (real, generated) pair end to end.
inline MetricReport evaluate(const MetricSpec& spec, std::span<const Image> real,
                             std::span<const Image> gen,
                             FeatureCache* cache = nullptr) {
  if (!spec.encoder) throw ConfigError("metric " + spec.name + " has no encoder");
  if (real.size() < 2 || gen.size() < 2) {
    throw InputError("metric " + spec.name +
                     " needs at least 2 images per set (got " +
                     std::to_string(real.size()) + " real, " +
                     std::to_string(gen.size()) + " generated)");
  }
  const auto start = std::chrono::steady_clock::now();
  FeatureCache local;
  FeatureCache& c = cache ? *cache : local;
  const FeatureSet fr = c.features(*spec.encoder, real);
  const FeatureSet fg = c.features(*spec.encoder, gen);
  MetricReport r;
  r.metric = spec.name;
  r.score = score_features(spec, fr, fg);
  r.n_real = real.size();
  r.n_gen = gen.size();
  r.config_hash = config_hash(spec);
  r.seed = spec.seed;
  r.wall_time_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  return r;
}

struct SetPair {
  std::string label;
  std::span<const Image> real;
  std::span<const Image> gen;
};

/// Every (pair, spec) cell, pair-major. Each distinct image is encoded once
/// per encoder through the shared cache.
inline std::vector<MetricReport> evaluate_matrix(
    const std::vector<MetricSpec>& specs, const std::vector<SetPair>& pairs,
    FeatureCache* cache = nullptr) {
  FeatureCache local;
  FeatureCache& c = cache ? *cache : local;
  std::vector<MetricReport> out;
  out.reserve(specs.size() * pairs.size());
  for (const SetPair& p : pairs) {
    for (const MetricSpec& s : specs) {
      MetricReport r = evaluate(s, p.real, p.gen, &c);
      r.label = p.label;
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline std::string report_csv_header() {
  return "label,metric,score,n_real,n_gen,config_hash,seed";
}

inline std::string report_csv_row(const MetricReport& r) {
  return r.label + ',' + r.metric + ',' + format_real(r.score) + ',' +
         std::to_string(r.n_real) + ',' + std::to_string(r.n_gen) + ',' +
         r.config_hash + ',' + std::to_string(r.seed);
}

}  // namespace fdd
