#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "emoforge/emoforge.hpp"

namespace testing {

/// Kind of the emoforge::Error thrown by f, or nullopt if nothing was thrown.
template <class F>
std::optional<emoforge::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const emoforge::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("emoforge_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline emoforge::Matrix random_matrix(std::size_t r, std::size_t c, emoforge::Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  emoforge::Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline emoforge::Vector random_vector(std::size_t n, emoforge::Rng& rng, double lo = -1.0, double hi = 1.0) {
  emoforge::Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline emoforge::Waveform sine(double hz, double seconds, int rate = 16000, double amp = 0.5) {
  emoforge::Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return w;
}

}  // namespace testing
