#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "dtts/common.hpp"

namespace dtts::signal {

// Per-utterance binary feature record: little-endian header (magic, version,
// rows, cols) followed by row-major 32-bit floats.
constexpr uint32_t kRecordMagic = 0x52544644;  // "DFTR"
constexpr uint32_t kRecordVersion = 1;

inline void write_record(const std::string& path, const MatF& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write record: " + path);
  uint32_t header[4] = {kRecordMagic, kRecordVersion, static_cast<uint32_t>(m.rows()),
                        static_cast<uint32_t>(m.cols())};
  f.write(reinterpret_cast<const char*>(header), sizeof(header));
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(m.size())));
  if (!f) throw IoError("short write: " + path);
}

inline MatF read_record(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open record: " + path);
  uint32_t header[4];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!f || header[0] != kRecordMagic)
    throw IoError("bad record magic: " + path);
  if (header[1] != kRecordVersion)
    throw IoError("unsupported record version in " + path);
  MatF m(static_cast<Eigen::Index>(header[2]), static_cast<Eigen::Index>(header[3]));
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(m.size())));
  if (!f) throw IoError("truncated record: " + path);
  return m;
}

inline void write_record_d(const std::string& path, const MatD& m) {
  write_record(path, m.cast<float>());
}

inline MatD read_record_d(const std::string& path) {
  return read_record(path).cast<double>();
}

}  // namespace dtts::signal
