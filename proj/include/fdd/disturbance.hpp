#pragma once

// Seeded image corruptions: two visual artifacts (salt & pepper, Gaussian
// noise), two structural ones (patch mask, patch swap) and their mix.
//
// alpha is the fraction of pixels touched for the noise kinds, the per-pixel
// variance for Gaussian noise, and the fraction of grid tiles for the patch
// kinds. Tiles are floor(H/grid) x floor(W/grid); leftover rows and columns
// at the bottom/right edge never move.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdd/error.hpp"
#include "fdd/image.hpp"
#include "fdd/rng.hpp"

namespace fdd {

/// Receives non-fatal diagnostics; defaults to stderr.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink =
      [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

enum class DisturbanceKind { salt_pepper, gaussian, patch_mask, patch_swap, mixed };

inline const char* to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::salt_pepper: return "salt_pepper";
    case DisturbanceKind::gaussian: return "gaussian";
    case DisturbanceKind::patch_mask: return "patch_mask";
    case DisturbanceKind::patch_swap: return "patch_swap";
    case DisturbanceKind::mixed: return "mixed";
  }
  return "?";
}

inline DisturbanceKind parse_disturbance_kind(const std::string& s) {
  for (auto k : {DisturbanceKind::salt_pepper, DisturbanceKind::gaussian,
                 DisturbanceKind::patch_mask, DisturbanceKind::patch_swap,
                 DisturbanceKind::mixed}) {
    if (s == to_string(k)) return k;
  }
  if (s == "pepper" || s == "sp") return DisturbanceKind::salt_pepper;
  if (s == "noise") return DisturbanceKind::gaussian;
  if (s == "mask") return DisturbanceKind::patch_mask;
  if (s == "swap") return DisturbanceKind::patch_swap;
  throw InputError("unknown disturbance kind '" + s + "'");
}

struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::gaussian;
  double alpha = 0.0;       // noise alpha for `mixed`
  double swap_alpha = 0.0;  // only used by `mixed`
  std::uint64_t seed = 0;
  std::size_t patch_grid = 4;

  friend bool operator==(const DisturbanceSpec&, const DisturbanceSpec&) = default;
};

namespace detail {

inline void require_alpha(double alpha, const char* op) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InputError(std::string(op) + ": alpha must be in [0, 1], got " +
                     std::to_string(alpha));
  }
}

struct TileGrid {
  std::size_t grid, tile_h, tile_w;

  std::size_t count() const { return grid * grid; }
  std::size_t row0(std::size_t t) const { return (t / grid) * tile_h; }
  std::size_t col0(std::size_t t) const { return (t % grid) * tile_w; }
};

inline TileGrid tile_grid(const Image& img, std::size_t grid, const char* op) {
  if (grid < 2) {
    throw InputError(std::string(op) + ": patch_grid must be >= 2");
  }
  if (img.height < grid || img.width < grid) {
    throw InputError(std::string(op) + ": image smaller than the patch grid");
  }
  return {grid, img.height / grid, img.width / grid};
}

inline std::vector<std::size_t> shuffled_tiles(std::size_t count,
                                               std::uint64_t seed) {
  std::vector<std::size_t> tiles(count);
  std::iota(tiles.begin(), tiles.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  std::shuffle(tiles.begin(), tiles.end(), rng);
  return tiles;
}

}  // namespace detail

/// Sets round(alpha * H * W) pixel positions, drawn without replacement, to
/// -1 or +1 with equal probability (all channels of a position together).
inline Image salt_pepper(const Image& img, double alpha, std::uint64_t seed) {
  detail::require_alpha(alpha, "salt_pepper");
  Image out = img;
  const std::size_t positions = img.height * img.width;
  const auto n = static_cast<std::size_t>(
      std::llround(alpha * static_cast<double>(positions)));
  if (n == 0) return out;
  std::vector<std::size_t> idx(positions);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t k = 0; k < n; ++k) {
    const double v = coin(rng) ? 1.0 : -1.0;
    for (std::size_t c = 0; c < img.channels; ++c)
      out.pixels[idx[k] * img.channels + c] = v;
  }
  return out;
}

/// Adds N(0, alpha) noise per pixel (std = sqrt(alpha)), then clamps to
/// [-1, 1]. alpha = 0.01 gives std 0.1, the DAE's training noise scale.
inline Image gaussian_noise(const Image& img, double alpha,
                            std::uint64_t seed) {
  if (!(alpha >= 0.0)) throw InputError("gaussian_noise: alpha must be >= 0");
  Image out = img;
  if (alpha == 0.0) return out;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(alpha));
  for (double& v : out.pixels) v = std::clamp(v + dist(rng), -1.0, 1.0);
  return out;
}

/// Fills round(alpha * grid^2) randomly chosen tiles with white (+1).
inline Image patch_mask(const Image& img, double alpha, std::uint64_t seed,
                        std::size_t grid = 4) {
  detail::require_alpha(alpha, "patch_mask");
  const auto g = detail::tile_grid(img, grid, "patch_mask");
  Image out = img;
  const auto n = static_cast<std::size_t>(
      std::llround(alpha * static_cast<double>(g.count())));
  if (n == 0) {
    if (alpha > 0) {
      warn("patch_mask: alpha " + std::to_string(alpha) + " on a " +
           std::to_string(grid) + "x" + std::to_string(grid) +
           " grid selects no tiles");
    }
    return out;
  }
  const auto tiles = detail::shuffled_tiles(g.count(), seed);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r0 = g.row0(tiles[k]), c0 = g.col0(tiles[k]);
    for (std::size_t y = r0; y < r0 + g.tile_h; ++y)
      for (std::size_t x = c0; x < c0 + g.tile_w; ++x)
        for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = 1.0;
  }
  return out;
}

/// Swaps round(alpha * grid^2) disjoint tile pairs. The pair set depends on
/// seed and grid only, so applying it twice restores the image.
inline Image patch_swap(const Image& img, double alpha, std::uint64_t seed,
                        std::size_t grid = 4) {
  detail::require_alpha(alpha, "patch_swap");
  const auto g = detail::tile_grid(img, grid, "patch_swap");
  const auto pairs = static_cast<std::size_t>(
      std::llround(alpha * static_cast<double>(g.count())));
  if (2 * pairs > g.count()) {
    throw InputError("patch_swap: " + std::to_string(pairs) +
                     " pairs requested but a " + std::to_string(grid) + "x" +
                     std::to_string(grid) + " grid holds at most " +
                     std::to_string(g.count() / 2));
  }
  Image out = img;
  if (pairs == 0) return out;
  const auto tiles = detail::shuffled_tiles(g.count(), seed);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t a = tiles[2 * k], b = tiles[2 * k + 1];
    for (std::size_t dy = 0; dy < g.tile_h; ++dy)
      for (std::size_t dx = 0; dx < g.tile_w; ++dx)
        for (std::size_t c = 0; c < img.channels; ++c)
          std::swap(out.at(g.row0(a) + dy, g.col0(a) + dx, c),
                    out.at(g.row0(b) + dy, g.col0(b) + dx, c));
  }
  return out;
}

/// patch_swap followed by gaussian_noise.
inline Image mixed(const Image& img, double noise_alpha, double swap_alpha,
                   std::uint64_t noise_seed, std::uint64_t swap_seed,
                   std::size_t grid = 4) {
  return gaussian_noise(patch_swap(img, swap_alpha, swap_seed, grid),
                        noise_alpha, noise_seed);
}

/// Sub-seeds used by `mixed` when driven from a single spec seed.
inline std::uint64_t mixed_noise_seed(std::uint64_t seed) {
  return derive_seed(seed, {1});
}
inline std::uint64_t mixed_swap_seed(std::uint64_t seed) {
  return derive_seed(seed, {2});
}

inline Image apply(const Image& img, const DisturbanceSpec& spec) {
  switch (spec.kind) {
    case DisturbanceKind::salt_pepper:
      return salt_pepper(img, spec.alpha, spec.seed);
    case DisturbanceKind::gaussian:
      return gaussian_noise(img, spec.alpha, spec.seed);
    case DisturbanceKind::patch_mask:
      return patch_mask(img, spec.alpha, spec.seed, spec.patch_grid);
    case DisturbanceKind::patch_swap:
      return patch_swap(img, spec.alpha, spec.seed, spec.patch_grid);
    case DisturbanceKind::mixed:
      return mixed(img, spec.alpha, spec.swap_alpha,
                   mixed_noise_seed(spec.seed), mixed_swap_seed(spec.seed),
                   spec.patch_grid);
  }
  throw InputError("unknown disturbance kind");
}

/// Canonical form, e.g. "patch_swap:alpha=0.25,grid=4,seed=7".
inline std::string to_string(const DisturbanceSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << to_string(s.kind) << ":alpha=" << s.alpha;
  if (s.kind == DisturbanceKind::mixed) out << ",swap=" << s.swap_alpha;
  if (s.kind == DisturbanceKind::patch_mask ||
      s.kind == DisturbanceKind::patch_swap || s.kind == DisturbanceKind::mixed)
    out << ",grid=" << s.patch_grid;
  out << ",seed=" << s.seed;
  return out.str();
}

/// Parses "kind[:key=value,...]" with keys alpha, swap, grid, seed.
inline DisturbanceSpec parse_disturbance(const std::string& text) {
  DisturbanceSpec spec;
  const auto colon = text.find(':');
  spec.kind = parse_disturbance_kind(text.substr(0, colon));
  if (colon == std::string::npos) return spec;
  std::stringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw InputError("disturbance option '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      std::size_t used = 0;
      if (key == "alpha" || key == "noise") {
        spec.alpha = std::stod(value, &used);
      } else if (key == "swap") {
        spec.swap_alpha = std::stod(value, &used);
      } else if (key == "grid") {
        spec.patch_grid = std::stoul(value, &used);
      } else if (key == "seed") {
        spec.seed = std::stoull(value, &used);
      } else {
        throw InputError("unknown disturbance option '" + key + "'");
      }
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      throw InputError("bad value for disturbance option '" + key + "': " +
                       value);
    }
  }
  if (spec.kind == DisturbanceKind::gaussian) {
    if (!(spec.alpha >= 0)) throw InputError("gaussian alpha must be >= 0");
  } else {
    detail::require_alpha(spec.alpha, "disturbance");
  }
  detail::require_alpha(spec.swap_alpha, "disturbance");
  return spec;
}

}  // namespace fdd
