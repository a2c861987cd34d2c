#pragma once

// PNG decode/encode through libpng's simplified API, and directory loading.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fdd/disturbance.hpp"
#include "fdd/error.hpp"
#include "fdd/image.hpp"

namespace fdd::io {

/// Decodes an 8-bit (or wider, reduced to 8-bit) gray or RGB PNG. Palette
/// images expand to RGB; alpha channels are dropped.
inline RawImage decode_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw InputError("cannot decode " + path + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  img.format = (color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY) |
               (alpha ? PNG_FORMAT_FLAG_ALPHA : 0u);
  const std::size_t stored = PNG_IMAGE_SAMPLE_CHANNELS(img.format);
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw InputError("cannot decode " + path + ": " + msg);
  }
  const std::size_t channels = color ? 3 : 1;
  RawImage raw{img.height, img.width, channels,
               std::vector<double>(std::size_t{img.height} * img.width * channels),
               PixelScale::byte};
  for (std::size_t p = 0; p < std::size_t{img.height} * img.width; ++p)
    for (std::size_t c = 0; c < channels; ++c)
      raw.values[p * channels + c] = buf[p * stored + c];
  return raw;
}

/// Writes an 8-bit gray (1 channel) or RGB (3 channels) PNG. Values are
/// rounded and clamped to [0, 255].
inline void encode_png(const std::string& path, const RawImage& raw) {
  if (raw.channels != 1 && raw.channels != 3)
    throw InputError("encode_png: need 1 or 3 channels");
  if (raw.height == 0 || raw.width == 0)
    throw InputError("encode_png: empty image");
  std::vector<png_byte> buf(raw.values.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(
        std::clamp(std::lround(raw.values[i]), 0L, 255L));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(raw.width);
  img.height = static_cast<png_uint_32>(raw.height);
  img.format = raw.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw InputError("cannot write " + path + ": " + img.message);
}

/// Maps a [-1, 1] image to 8-bit values.
inline RawImage to_bytes(const Image& img) {
  RawImage raw{img.height, img.width, img.channels,
               std::vector<double>(img.pixels.size()), PixelScale::byte};
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    raw.values[i] = std::round((std::clamp(img.pixels[i], -1.0, 1.0) + 1.0) *
                               127.5);
  return raw;
}

inline void save_png(const std::string& path, const Image& img) {
  encode_png(path, to_bytes(img));
}

struct LoadResult {
  std::vector<Image> images;
  std::vector<std::string> names;  // file names, sorted
  std::size_t skipped = 0;
};

/// Loads every *.png in `dir` (non-recursive) in filename order, conformed to
/// `shape`. Undecodable files are skipped with a warning unless `strict`.
inline LoadResult load_images(const std::string& dir, const ImageShape& shape,
                              bool strict = false) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw InputError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  LoadResult out;
  for (const auto& f : files) {
    try {
      out.images.push_back(preprocess(decode_png(f.string()), shape));
      out.names.push_back(f.filename().string());
    } catch (const InputError& e) {
      if (strict) throw;
      ++out.skipped;
      warn(std::string("skipping ") + e.what());
    }
  }
  if (out.images.empty()) throw InputError("no loadable PNG images in " + dir);
  if (out.skipped > 0)
    warn(std::to_string(out.skipped) + " file(s) skipped in " + dir);
  return out;
}

}  // namespace fdd::io
