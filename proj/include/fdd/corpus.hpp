#pragma once

// Synthetic line-drawing corpora: dark anti-aliased strokes on a white
// ground, every image a pure function of (spec, index).
//
//   shapes       1-3 outlined circles, rectangles and triangles, some filled
//   frames       nested rectangular frames with cross bars
//   bikes-stick  two wheels, a frame quadrilateral, seat and handlebar
//                segments; missing_wheel / detach give the probability that
//                an image drops its front wheel or floats its seat post

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fdd/error.hpp"
#include "fdd/image.hpp"
#include "fdd/rng.hpp"

namespace fdd {

enum class CorpusGenerator { shapes, frames, bikes_stick };

inline const char* to_string(CorpusGenerator g) {
  switch (g) {
    case CorpusGenerator::shapes: return "shapes";
    case CorpusGenerator::frames: return "frames";
    case CorpusGenerator::bikes_stick: return "bikes-stick";
  }
  return "?";
}

inline CorpusGenerator parse_corpus_generator(const std::string& s) {
  if (s == "shapes") return CorpusGenerator::shapes;
  if (s == "frames") return CorpusGenerator::frames;
  if (s == "bikes-stick" || s == "bikes") return CorpusGenerator::bikes_stick;
  throw InputError("unknown corpus generator '" + s +
                   "' (expected shapes, frames or bikes-stick)");
}

struct CorpusSpec {
  CorpusGenerator generator = CorpusGenerator::shapes;
  std::size_t count = 100;
  std::size_t size = 64;
  std::uint64_t seed = 0;
  double missing_wheel = 0.0;  // bikes-stick only
  double detach = 0.0;         // bikes-stick only
};

inline std::string to_string(const CorpusSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << to_string(s.generator) << ":count=" << s.count << ",size=" << s.size
      << ",seed=" << s.seed;
  if (s.generator == CorpusGenerator::bikes_stick)
    out << ",missing_wheel=" << s.missing_wheel << ",detach=" << s.detach;
  return out.str();
}

/// Parses "generator[:key=value,...]" with keys count, size, seed,
/// missing_wheel, detach.
inline CorpusSpec parse_corpus_spec(const std::string& text) {
  CorpusSpec spec;
  const auto colon = text.find(':');
  spec.generator = parse_corpus_generator(text.substr(0, colon));
  if (colon != std::string::npos) {
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos)
        throw InputError("corpus option '" + item + "' is not key=value");
      const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
      try {
        std::size_t used = 0;
        if (key == "count") {
          spec.count = std::stoul(value, &used);
        } else if (key == "size") {
          spec.size = std::stoul(value, &used);
        } else if (key == "seed") {
          spec.seed = std::stoull(value, &used);
        } else if (key == "missing_wheel") {
          spec.missing_wheel = std::stod(value, &used);
        } else if (key == "detach") {
          spec.detach = std::stod(value, &used);
        } else {
          throw InputError("unknown corpus option '" + key + "'");
        }
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::logic_error&) {
        throw InputError("bad value for corpus option '" + key + "': " + value);
      }
    }
  }
  if (spec.count == 0) throw InputError("corpus count must be > 0");
  if (spec.size < 16) throw InputError("corpus size must be >= 16");
  for (double p : {spec.missing_wheel, spec.detach})
    if (!(p >= 0 && p <= 1))
      throw InputError("corpus probabilities must be in [0, 1]");
  return spec;
}

namespace detail {

struct Point {
  double x, y;
};

inline double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

/// Ink accumulator. Coverage of a pixel by a stroke of half-width r at
/// centre distance d ramps linearly from 1 to 0 over `edge` pixels centred
/// on d = r.
class Canvas {
 public:
  explicit Canvas(std::size_t size, double edge = 1.0)
      : size_(size), edge_(edge), ink_(size * size, 0.0) {}

  void segment(Point a, Point b, double half_width) {
    stroke([&](Point p) { return segment_distance(p, a, b); }, half_width);
  }

  void polyline(const std::vector<Point>& pts, double half_width, bool closed) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      segment(pts[i], pts[i + 1], half_width);
    if (closed && pts.size() > 2) segment(pts.back(), pts.front(), half_width);
  }

  void circle(Point c, double radius, double half_width) {
    stroke([&](Point p) { return std::abs(std::hypot(p.x - c.x, p.y - c.y) - radius); },
           half_width);
  }

  // Filled primitives measure signed distance (negative inside).
  void disk(Point c, double radius) {
    stroke([&](Point p) {
             return std::hypot(p.x - c.x, p.y - c.y) - radius;
           },
           0.0);
  }

  void fill_rect(Point a, Point b) {
    stroke([&](Point p) {
             const double dx = std::max(a.x - p.x, p.x - b.x);
             const double dy = std::max(a.y - p.y, p.y - b.y);
             if (dx <= 0 && dy <= 0) return std::max(dx, dy);
             return std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
           },
           0.0);
  }

  /// Filled convex polygon (vertices in either winding).
  void polygon(const std::vector<Point>& pts) {
    stroke([&](Point p) {
             double edge = std::numeric_limits<double>::infinity();
             bool inside = true;
             double sign = 0;
             for (std::size_t i = 0; i < pts.size(); ++i) {
               const Point a = pts[i], b = pts[(i + 1) % pts.size()];
               const double cross =
                   (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
               if (sign == 0) sign = cross;
               if (cross * sign < 0) inside = false;
               edge = std::min(edge, segment_distance(p, a, b));
             }
             return inside ? -edge : edge;
           },
           0.0);
  }

  Image image() const {
    Image img(size_, size_, 1);
    for (std::size_t i = 0; i < ink_.size(); ++i) img.pixels[i] = 1.0 - 2.0 * ink_[i];
    return img;
  }

 private:
  template <class Dist>
  void stroke(Dist dist, double half_width) {
    for (std::size_t y = 0; y < size_; ++y) {
      for (std::size_t x = 0; x < size_; ++x) {
        const Point p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
        const double cov =
            std::clamp((half_width - dist(p)) / edge_ + 0.5, 0.0, 1.0);
        double& ink = ink_[y * size_ + x];
        ink = std::max(ink, cov);
      }
    }
  }

  std::size_t size_;
  double edge_;
  std::vector<double> ink_;
};

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Image render_shapes(std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  Canvas canvas(size, 2.5);
  const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
  const double r = uniform(rng, 0.22, 0.36) * s;
  const Point c{s / 2 + uniform(rng, -0.12, 0.12) * s,
                s / 2 + uniform(rng, -0.12, 0.12) * s};
  if (kind == 0) {
    canvas.disk(c, r);
  } else if (kind == 1) {
    const double ry = r * uniform(rng, 0.6, 1.0);
    canvas.fill_rect({c.x - r, c.y - ry}, {c.x + r, c.y + ry});
  } else {
    const double t = uniform(rng, 0, 2 * std::numbers::pi);
    std::vector<Point> tri;
    for (int v = 0; v < 3; ++v) {
      const double a = t + v * 2 * std::numbers::pi / 3;
      tri.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
    canvas.polygon(tri);
  }
  return canvas.image();
}

inline Image render_frames(std::size_t size, Rng& rng) {
  Canvas canvas(size);
  const double s = static_cast<double>(size);
  const double hw = uniform(rng, 1.0, 1.5);
  double x0 = uniform(rng, 3, 0.2 * s), y0 = uniform(rng, 3, 0.2 * s);
  double x1 = s - uniform(rng, 3, 0.2 * s), y1 = s - uniform(rng, 3, 0.2 * s);
  canvas.polyline({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, hw, true);
  if (uniform(rng, 0, 1) < 0.6) {
    const double in = uniform(rng, 0.15, 0.3) * (x1 - x0);
    canvas.polyline({{x0 + in, y0 + in}, {x1 - in, y0 + in},
                     {x1 - in, y1 - in}, {x0 + in, y1 - in}},
                    hw, true);
  }
  const int bars = std::uniform_int_distribution<int>(0, 2)(rng);
  for (int b = 0; b < bars; ++b) {
    if (uniform(rng, 0, 1) < 0.5) {
      const double y = uniform(rng, y0 + 4, y1 - 4);
      canvas.segment({x0, y}, {x1, y}, hw);
    } else {
      const double x = uniform(rng, x0 + 4, x1 - 4);
      canvas.segment({x, y0}, {x, y1}, hw);
    }
  }
  return canvas.image();
}

inline Image render_bike(std::size_t size, Rng& rng, double missing_wheel,
                         double detach) {
  Canvas canvas(size);
  const double s = static_cast<double>(size);
  const double hw = uniform(rng, 0.9, 1.4);
  const double r = uniform(rng, 0.15, 0.2) * s;
  const double ground = s - r - uniform(rng, 2, 0.08 * s);
  const double base = uniform(rng, 0.5, 0.6) * s;
  const double cx = s / 2 + uniform(rng, -0.04, 0.04) * s;
  const Point rear{cx - base / 2, ground}, front{cx + base / 2, ground};
  const Point bracket{cx + uniform(rng, -0.08, 0.0) * s,
                      ground + uniform(rng, -0.02, 0.04) * s};
  const Point seat{cx - uniform(rng, 0.05, 0.12) * s,
                   ground - uniform(rng, 0.28, 0.36) * s};
  const Point head{front.x - uniform(rng, 0.06, 0.12) * s,
                   ground - uniform(rng, 0.3, 0.38) * s};
  const bool drop_wheel = uniform(rng, 0, 1) < missing_wheel;
  const bool detached = uniform(rng, 0, 1) < detach;

  canvas.circle(rear, r, hw);
  if (!drop_wheel) canvas.circle(front, r, hw);
  canvas.polyline({rear, bracket, head, seat}, hw, true);
  canvas.segment(bracket, seat, hw);
  canvas.segment(head, front, hw);
  // Seat post and saddle; a detached post floats above the frame.
  const double lift = detached ? uniform(rng, 0.06, 0.1) * s : 0.0;
  const Point post_low{seat.x, seat.y - lift};
  const Point post_top{seat.x - 0.02 * s, seat.y - 0.08 * s - lift};
  canvas.segment(post_low, post_top, hw);
  canvas.segment({post_top.x - 0.05 * s, post_top.y},
                 {post_top.x + 0.05 * s, post_top.y}, hw);
  // Handlebar.
  const Point bar{head.x + 0.01 * s, head.y - 0.07 * s};
  canvas.segment(head, bar, hw);
  canvas.segment(bar, {bar.x + 0.06 * s, bar.y + 0.02 * s}, hw);
  return canvas.image();
}

}  // namespace detail

/// Image `index` of the corpus; independent of count.
inline Image generate_image(const CorpusSpec& spec, std::size_t index) {
  Rng rng = make_rng(derive_seed(spec.seed, {0xc0, index}));
  switch (spec.generator) {
    case CorpusGenerator::shapes: return detail::render_shapes(spec.size, rng);
    case CorpusGenerator::frames: return detail::render_frames(spec.size, rng);
    case CorpusGenerator::bikes_stick:
      return detail::render_bike(spec.size, rng, spec.missing_wheel, spec.detach);
  }
  throw InputError("unknown corpus generator");
}

inline std::vector<Image> generate_corpus(const CorpusSpec& spec) {
  std::vector<Image> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(generate_image(spec, i));
  return out;
}

}  // namespace fdd
