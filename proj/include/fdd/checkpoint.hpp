#pragma once

// Checkpoint layout (all little-endian):
//   "DAE1"
//   u32 height, width, channels, layer_count, channels[layer_count], latent
//   f32 parameter data, declaration order
//   u64 optimizer step, u8 has_moments, [f32 first/second moments per param]
//   u32 history length, f64 per-epoch loss
//   u32 CRC32 of all preceding bytes

#include <cstdint>
#include <string>
#include <vector>

#include "fdd/dae.hpp"
#include "fdd/io/binary.hpp"

namespace fdd {

namespace detail {

template <class Real>
void put_tensor_f32(io::ByteWriter& w, const BasicTensor<Real>& t) {
  for (Real v : t.data()) w.put(static_cast<float>(v));
}

template <class Real>
BasicTensor<Real> get_tensor_f32(io::ByteReader& r, const Shape& shape) {
  BasicTensor<Real> t(shape);
  for (Real& v : t.data()) v = static_cast<Real>(r.get<float>());
  return t;
}

}  // namespace detail

template <class Real>
std::vector<std::uint8_t> serialize_checkpoint(const BasicDae<Real>& model) {
  io::ByteWriter w;
  w.magic("DAE1");
  const DaeConfig& cfg = model.config();
  w.put(static_cast<std::uint32_t>(cfg.input.height));
  w.put(static_cast<std::uint32_t>(cfg.input.width));
  w.put(static_cast<std::uint32_t>(cfg.input.channels));
  w.put(static_cast<std::uint32_t>(cfg.encoder_channels.size()));
  for (std::size_t c : cfg.encoder_channels) w.put(static_cast<std::uint32_t>(c));
  w.put(static_cast<std::uint32_t>(cfg.latent_dim));
  for (const auto& p : model.params()) detail::put_tensor_f32(w, p.value);
  w.put(static_cast<std::uint64_t>(model.params().step()));
  const bool moments = model.params().has_moments();
  w.put(static_cast<std::uint8_t>(moments));
  if (moments) {
    for (const auto& p : model.params()) {
      detail::put_tensor_f32(w, p.first_moment);
      detail::put_tensor_f32(w, p.second_moment);
    }
  }
  w.put(static_cast<std::uint32_t>(model.history().size()));
  for (double loss : model.history()) w.put(loss);
  return w.seal();
}

template <class Real = float>
BasicDae<Real> deserialize_checkpoint(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes), "DAE1", "checkpoint");
  DaeConfig cfg;
  cfg.input.height = r.get<std::uint32_t>();
  cfg.input.width = r.get<std::uint32_t>();
  cfg.input.channels = r.get<std::uint32_t>();
  const std::uint32_t layers = r.get<std::uint32_t>();
  if (layers == 0 || layers > 64) throw ChecksumError("checkpoint: bad layer count");
  cfg.encoder_channels.clear();
  for (std::uint32_t i = 0; i < layers; ++i)
    cfg.encoder_channels.push_back(r.get<std::uint32_t>());
  cfg.latent_dim = r.get<std::uint32_t>();

  // A freshly built model supplies names and shapes in declaration order.
  BasicDae<Real> model = build_dae<Real>(cfg, 0);
  for (auto& p : model.params())
    p.value = detail::get_tensor_f32<Real>(r, p.value.shape());
  model.params().set_step(r.get<std::uint64_t>());
  if (r.get<std::uint8_t>() != 0) {
    for (auto& p : model.params()) {
      p.first_moment = detail::get_tensor_f32<Real>(r, p.value.shape());
      p.second_moment = detail::get_tensor_f32<Real>(r, p.value.shape());
    }
  }
  const std::uint32_t epochs = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < epochs; ++i)
    model.history().push_back(r.get<double>());
  if (!r.at_end()) throw ChecksumError("checkpoint: trailing bytes");
  return model;
}

template <class Real>
void save_checkpoint(const BasicDae<Real>& model, const std::string& path) {
  io::write_file(path, serialize_checkpoint(model));
}

template <class Real = float>
BasicDae<Real> load_checkpoint(const std::string& path) {
  return deserialize_checkpoint<Real>(io::read_file(path));
}

}  // namespace fdd
