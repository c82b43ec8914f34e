#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "dtts/nn/params.hpp"

namespace dtts::train {

// Versioned container: header counters, a free-form config text block, then
// every parameter (name, shape, value, Adam moments) as 32-bit floats in
// creation order, and a trailer magic for truncation detection. The RNG
// stream position is fully captured by (root_seed, step): all stochastic
// draws are derived from them.
constexpr uint32_t kCkptMagic = 0x4b435444;    // "DTCK"
constexpr uint32_t kCkptTrailer = 0x44544b43;  // "CKTD"
constexpr uint32_t kCkptVersion = 1;

struct CheckpointMeta {
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t opt_step = 0;
  uint64_t root_seed = 0;
  std::string config_text;
};

namespace detail {

inline void write_u32(std::ostream& s, uint32_t v) {
  s.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ostream& s, uint64_t v) {
  s.write(reinterpret_cast<const char*>(&v), 8);
}
inline uint32_t read_u32(std::istream& s) {
  uint32_t v = 0;
  s.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline uint64_t read_u64(std::istream& s) {
  uint64_t v = 0;
  s.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline void write_str(std::ostream& s, const std::string& str) {
  write_u32(s, static_cast<uint32_t>(str.size()));
  s.write(str.data(), static_cast<std::streamsize>(str.size()));
}
inline std::string read_str(std::istream& s) {
  uint32_t n = read_u32(s);
  if (n > (1u << 26)) throw IoError("checkpoint: absurd string length");
  std::string str(n, '\0');
  s.read(str.data(), n);
  return str;
}

template <typename Real>
void write_mat_f32(std::ostream& s, const Mat<Real>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    s.write(reinterpret_cast<const char*>(&f), 4);
  }
}

template <typename Real>
void read_mat_f32(std::istream& s, Mat<Real>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    float f = 0;
    s.read(reinterpret_cast<char*>(&f), 4);
    m.data()[i] = static_cast<Real>(f);
  }
}

}  // namespace detail

template <typename Real>
void checkpoint_save(const std::string& path, const nn::ParamStore<Real>& ps,
                     const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  detail::write_u32(f, kCkptMagic);
  detail::write_u32(f, kCkptVersion);
  detail::write_u64(f, meta.step);
  detail::write_u64(f, meta.epoch);
  detail::write_u64(f, meta.opt_step);
  detail::write_u64(f, meta.root_seed);
  detail::write_str(f, meta.config_text);
  detail::write_u32(f, static_cast<uint32_t>(ps.all().size()));
  for (const auto& up : ps.all()) {
    detail::write_str(f, up->name);
    detail::write_u32(f, static_cast<uint32_t>(up->value.rows()));
    detail::write_u32(f, static_cast<uint32_t>(up->value.cols()));
    detail::write_mat_f32(f, up->value);
    detail::write_mat_f32(f, up->m);
    detail::write_mat_f32(f, up->v);
  }
  detail::write_u32(f, kCkptTrailer);
  if (!f) throw IoError("short write: " + path);
}

// Reads only the header and config text (to rebuild the model shape before
// loading the parameters).
inline CheckpointMeta checkpoint_peek(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  if (detail::read_u32(f) != kCkptMagic) throw IoError("not a checkpoint: " + path);
  const uint32_t version = detail::read_u32(f);
  if (version != kCkptVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  CheckpointMeta meta;
  meta.step = detail::read_u64(f);
  meta.epoch = detail::read_u64(f);
  meta.opt_step = detail::read_u64(f);
  meta.root_seed = detail::read_u64(f);
  meta.config_text = detail::read_str(f);
  if (!f) throw IoError("truncated checkpoint header: " + path);
  return meta;
}

template <typename Real>
CheckpointMeta checkpoint_load(const std::string& path, nn::ParamStore<Real>& ps) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  if (detail::read_u32(f) != kCkptMagic) throw IoError("not a checkpoint: " + path);
  const uint32_t version = detail::read_u32(f);
  if (version != kCkptVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  CheckpointMeta meta;
  meta.step = detail::read_u64(f);
  meta.epoch = detail::read_u64(f);
  meta.opt_step = detail::read_u64(f);
  meta.root_seed = detail::read_u64(f);
  meta.config_text = detail::read_str(f);
  const uint32_t count = detail::read_u32(f);
  if (count != ps.all().size())
    throw IoError("checkpoint parameter count mismatch in " + path);
  for (const auto& up : ps.all()) {
    const std::string name = detail::read_str(f);
    const uint32_t rows = detail::read_u32(f);
    const uint32_t cols = detail::read_u32(f);
    if (name != up->name || rows != static_cast<uint32_t>(up->value.rows()) ||
        cols != static_cast<uint32_t>(up->value.cols()))
      throw IoError("checkpoint layout mismatch at parameter '" + up->name + "'");
    detail::read_mat_f32(f, up->value);
    detail::read_mat_f32(f, up->m);
    detail::read_mat_f32(f, up->v);
    if (!f) throw IoError("truncated checkpoint: " + path);
  }
  if (detail::read_u32(f) != kCkptTrailer || !f)
    throw IoError("truncated checkpoint: " + path);
  return meta;
}

}  // namespace dtts::train
