#pragma once

// RIFF/WAVE, PCM 16-bit mono only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "emoforge/matrix.hpp"

namespace emoforge {

struct Waveform {
  Vector samples;
  int sample_rate = 16000;

  std::size_t size() const noexcept { return samples.size(); }
  friend bool operator==(const Waveform&, const Waveform&) = default;
};

namespace wav_detail {

inline std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t off) {
  return std::uint32_t(b[off]) | std::uint32_t(b[off + 1]) << 8 | std::uint32_t(b[off + 2]) << 16 |
         std::uint32_t(b[off + 3]) << 24;
}
inline std::uint16_t le16(const std::vector<unsigned char>& b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | b[off + 1] << 8);
}
inline void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

[[noreturn]] inline void bad(const std::string& what, std::size_t offset, const std::string& where) {
  fail(ErrorKind::Format, where + ": " + what + " at byte " + std::to_string(offset));
}

}  // namespace wav_detail

/// Decodes an in-memory WAV image. `where` names the source in error messages.
inline Waveform wav_decode(const std::vector<unsigned char>& bytes, const std::string& where = "<memory>") {
  using namespace wav_detail;
  if (bytes.size() < 12) bad("truncated RIFF header", bytes.size(), where);
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) bad("missing RIFF tag", 0, where);
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) bad("missing WAVE tag", 8, where);

  bool have_fmt = false;
  Waveform w;
  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + off), 4);
    const std::uint32_t len = le32(bytes, off + 4);
    const std::size_t body = off + 8;
    if (id == "fmt ") {
      if (len < 16 || body + 16 > bytes.size()) bad("truncated fmt chunk", off, where);
      const auto format = le16(bytes, body);
      const auto channels = le16(bytes, body + 2);
      const auto bits = le16(bytes, body + 14);
      if (format != 1) bad("unsupported encoding " + std::to_string(format) + " (PCM only)", body, where);
      if (channels != 1) bad("unsupported channel count " + std::to_string(channels) + " (mono only)", body + 2, where);
      if (bits != 16) bad("unsupported bit depth " + std::to_string(bits) + " (16-bit only)", body + 14, where);
      w.sample_rate = static_cast<int>(le32(bytes, body + 4));
      if (w.sample_rate <= 0) bad("invalid sample rate", body + 4, where);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) bad("data chunk before fmt chunk", off, where);
      if (body + len > bytes.size()) bad("truncated data chunk", bytes.size(), where);
      if (len % 2 != 0) bad("odd data chunk length", off + 4, where);
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto q = static_cast<std::int16_t>(le16(bytes, body + 2 * i));
        w.samples[i] = std::clamp(static_cast<double>(q) / 32767.0, -1.0, 1.0);
      }
      if (w.samples.empty()) bad("empty data chunk", off, where);
      return w;
    }
    off = body + len + (len & 1);
  }
  bad(have_fmt ? "missing data chunk" : "missing fmt chunk", bytes.size(), where);
}

/// PCM-16 image; samples are clipped to [-1, 1] and rounded to 1/32767 steps.
inline std::vector<unsigned char> wav_encode(const Waveform& w) {
  using namespace wav_detail;
  require(w.sample_rate > 0, ErrorKind::InvalidInput, "wav_encode: invalid sample rate");
  const auto data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<unsigned char> b;
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, static_cast<std::uint32_t>(w.sample_rate));
  put32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_len);
  for (double s : w.samples) {
    const double c = std::isfinite(s) ? std::clamp(s, -1.0, 1.0) : 0.0;
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  return b;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

inline Waveform wav_read(const std::filesystem::path& path) {
  return wav_decode(read_file_bytes(path), path.string());
}

inline void wav_write(const std::filesystem::path& path, const Waveform& w) {
  write_file_bytes(path, wav_encode(w));
}

}  // namespace emoforge
