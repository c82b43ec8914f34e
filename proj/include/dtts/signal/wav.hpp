#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dtts/signal/resample.hpp"
#include "dtts/signal/stft.hpp"

namespace dtts::signal {

namespace detail {

inline uint32_t read_u32(std::istream& s) {
  unsigned char b[4];
  s.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t read_u16(std::istream& s) {
  unsigned char b[2];
  s.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u32(std::ostream& s, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  s.write(reinterpret_cast<char*>(b), 4);
}

inline void write_u16(std::ostream& s, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  s.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace detail

// 16-bit PCM mono WAV reader. Other sample rates are resampled to 16 kHz.
inline Waveform load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open wav file: " + path);

  char tag[5] = {0};
  f.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) throw InputError("not a RIFF file: " + path);
  detail::read_u32(f);
  f.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) throw InputError("not a WAVE file: " + path);

  uint16_t channels = 0, bits = 0, format = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;
  while (f.read(tag, 4)) {
    uint32_t size = detail::read_u32(f);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = detail::read_u16(f);
      channels = detail::read_u16(f);
      rate = detail::read_u32(f);
      detail::read_u32(f);
      detail::read_u16(f);
      bits = detail::read_u16(f);
      if (size > 16) f.seekg(size - 16, std::ios::cur);
    } else if (std::strncmp(tag, "data", 4) == 0) {
      pcm.resize(size / 2);
      f.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(pcm.size() * 2));
      break;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (format != 1 || bits != 16)
    throw InputError("wav must be 16-bit PCM: " + path);
  if (channels != 1) throw InputError("wav must be mono: " + path);
  if (pcm.empty()) throw InputError("wav has no samples: " + path);

  std::vector<double> samples(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) samples[i] = pcm[i] / 32768.0;
  if (rate != static_cast<uint32_t>(kSampleRate))
    samples = resample(samples, static_cast<double>(kSampleRate) / rate);
  return Waveform{std::move(samples), kSampleRate};
}

inline void save_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write wav file: " + path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t rate = static_cast<uint32_t>(w.sample_rate);

  f.write("RIFF", 4);
  detail::write_u32(f, 36 + n * 2);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  detail::write_u32(f, 16);
  detail::write_u16(f, 1);
  detail::write_u16(f, 1);
  detail::write_u32(f, rate);
  detail::write_u32(f, rate * 2);
  detail::write_u16(f, 2);
  detail::write_u16(f, 16);
  f.write("data", 4);
  detail::write_u32(f, n * 2);
  for (double v : w.samples) {
    double c = std::min(1.0, std::max(-1.0, v));
    auto s = static_cast<int16_t>(std::lround(c * 32767.0));
    detail::write_u16(f, static_cast<uint16_t>(s));
  }
}

}  // namespace dtts::signal
