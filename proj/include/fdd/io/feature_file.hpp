#pragma once

// Feature file: "FEAT", u16 version, u64 N, u64 D, 32-byte encoder digest,
// N*D f32 row-major, u32 CRC32.

#include <cstdint>
#include <string>
#include <vector>

#include "fdd/features.hpp"
#include "fdd/hash.hpp"
#include "fdd/io/binary.hpp"

namespace fdd::io {

inline constexpr std::uint16_t kFeatureFileVersion = 1;

struct FeatureFile {
  Digest encoder{};
  FeatureSet features;
};

inline std::vector<std::uint8_t> serialize_features(const FeatureFile& f) {
  ByteWriter w;
  w.magic("FEAT");
  w.put(kFeatureFileVersion);
  w.put(static_cast<std::uint64_t>(f.features.rows()));
  w.put(static_cast<std::uint64_t>(f.features.cols()));
  w.bytes(f.encoder.data(), f.encoder.size());
  for (Eigen::Index i = 0; i < f.features.rows(); ++i)
    for (Eigen::Index j = 0; j < f.features.cols(); ++j)
      w.put(static_cast<float>(f.features(i, j)));
  return w.seal();
}

inline FeatureFile deserialize_features(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes), "FEAT", "feature file");
  const auto version = r.get<std::uint16_t>();
  if (version != kFeatureFileVersion)
    throw ChecksumError("feature file: unsupported version " +
                        std::to_string(version));
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint64_t>();
  FeatureFile f;
  r.bytes(f.encoder.data(), f.encoder.size());
  if (d != 0 && n > r.remaining() / 4 / d)
    throw ChecksumError("feature file: declared N*D exceeds body length");
  if (n * d * 4 != r.remaining())
    throw ChecksumError("feature file: declared N*D does not match body length");
  f.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.features.rows(); ++i)
    for (Eigen::Index j = 0; j < f.features.cols(); ++j)
      f.features(i, j) = r.get<float>();
  return f;
}

inline void save_features(const FeatureFile& f, const std::string& path) {
  write_file(path, serialize_features(f));
}

inline FeatureFile load_features(const std::string& path) {
  return deserialize_features(read_file(path));
}

}  // namespace fdd::io
