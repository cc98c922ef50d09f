#pragma once

// STFT / ISTFT, Slaney mel filterbank, log-mel, mel-cepstra and Griffin-Lim.
// FFTs go through FFTW; the mel pseudo-inverse through Eigen.

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>
#include <vector>

#include "emoforge/matrix.hpp"
#include "emoforge/wav.hpp"

namespace emoforge {

using Complex = std::complex<double>;

struct StftConfig {
  std::size_t n_fft = 512;
  std::size_t hop = 128;
};

struct MelConfig {
  int sample_rate = 16000;
  std::size_t n_fft = 512;
  std::size_t hop = 128;
  std::size_t n_mels = 40;
  double f_min = 0.0;
  double f_max = 8000.0;
};

inline constexpr double kLogFloor = 1e-10;

/// Complex frames, T x (n_fft/2 + 1), row-major.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  std::vector<Complex> data;

  Complex& at(std::size_t t, std::size_t k) { return data[t * bins + k]; }
  Complex at(std::size_t t, std::size_t k) const { return data[t * bins + k]; }

  Matrix magnitude() const {
    Matrix m(frames, bins);
    for (std::size_t i = 0; i < data.size(); ++i) m[i] = std::abs(data[i]);
    return m;
  }
};

struct MelSpectrogram {
  Matrix frames;  // T x n_mels, natural-log energies
  int sample_rate = 16000;
  std::size_t hop = 128;
};

namespace dsp_detail {

/// Real FFT of one fixed size with FFTW_ESTIMATE plans (deterministic).
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const double* in, Complex* out) {
    std::copy_n(in, n_, real_);
    fftw_execute(forward_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = {spec_[k][0], spec_[k][1]};
  }

  /// Unnormalized inverse divided by n, i.e. the exact inverse of forward().
  void inverse(const Complex* in, double* out) {
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      spec_[k][0] = in[k].real();
      spec_[k][1] = in[k].imag();
    }
    fftw_execute(inverse_);
    const double s = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = real_[i] * s;
  }

  static RealFft& get(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<RealFft>(n);
    return *slot;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

inline bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

}  // namespace dsp_detail

/// Periodic Hann window.
inline Vector hann_window(std::size_t n) {
  Vector w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Centered STFT: the signal is reflect-padded by n_fft/2 on both sides, so
/// frame t is centered on sample t*hop and T = 1 + len/hop.
inline Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  require(dsp_detail::is_pow2(cfg.n_fft), ErrorKind::InvalidInput, "stft: n_fft must be a power of two");
  require(cfg.hop >= 1 && cfg.hop <= cfg.n_fft, ErrorKind::InvalidInput, "stft: need 1 <= hop <= n_fft");
  const std::size_t pad = cfg.n_fft / 2;
  require(x.size() > pad, ErrorKind::InvalidInput,
          "stft: signal of " + std::to_string(x.size()) + " samples is too short for n_fft " +
              std::to_string(cfg.n_fft));

  Vector padded(x.size() + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = x[i + 1];
    padded[pad + x.size() + i] = x[x.size() - 2 - i];
  }
  std::copy(x.begin(), x.end(), padded.begin() + pad);

  Spectrogram s;
  s.n_fft = cfg.n_fft;
  s.hop = cfg.hop;
  s.bins = cfg.n_fft / 2 + 1;
  s.frames = 1 + (padded.size() - cfg.n_fft) / cfg.hop;
  s.data.resize(s.frames * s.bins);
  const Vector win = hann_window(cfg.n_fft);
  Vector frame(cfg.n_fft);
  auto& fft = dsp_detail::RealFft::get(cfg.n_fft);
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t i = 0; i < cfg.n_fft; ++i) frame[i] = padded[t * cfg.hop + i] * win[i];
    fft.forward(frame.data(), &s.data[t * s.bins]);
  }
  return s;
}

inline Spectrogram stft(const Waveform& w, const StftConfig& cfg = {}) { return stft(w.samples, cfg); }

/// Windowed overlap-add inverse normalized by the summed squared window,
/// the least-squares inverse of stft(). `length` defaults to (T-1)*hop.
inline Vector istft(const Spectrogram& s, std::size_t length = 0) {
  require(s.frames >= 1 && s.bins == s.n_fft / 2 + 1, ErrorKind::Shape, "istft: malformed spectrogram");
  const std::size_t pad = s.n_fft / 2;
  if (length == 0) length = (s.frames - 1) * s.hop;
  const std::size_t total = s.n_fft + (s.frames - 1) * s.hop;
  Vector y(total, 0.0), wsum(total, 0.0), frame(s.n_fft);
  const Vector win = hann_window(s.n_fft);
  auto& fft = dsp_detail::RealFft::get(s.n_fft);
  for (std::size_t t = 0; t < s.frames; ++t) {
    fft.inverse(&s.data[t * s.bins], frame.data());
    for (std::size_t i = 0; i < s.n_fft; ++i) {
      y[t * s.hop + i] += frame[i] * win[i];
      wsum[t * s.hop + i] += win[i] * win[i];
    }
  }
  Vector out(length, 0.0);
  for (std::size_t i = 0; i < length && pad + i < total; ++i) {
    const double ws = wsum[pad + i];
    out[i] = ws > 1e-11 ? y[pad + i] / ws : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank.

inline double hz_to_mel_slaney(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz_slaney(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

struct MelFilterbank {
  Matrix weights;  // n_mels x (n_fft/2 + 1)
  Vector edges_hz;  // n_mels + 2 band edges
  double f_min = 0.0;
  double f_max = 0.0;
};

/// Slaney-style triangles with area normalization 2 / (upper - lower).
inline MelFilterbank mel_filterbank(const MelConfig& cfg) {
  require(cfg.n_mels >= 1 && cfg.f_max > cfg.f_min && cfg.f_min >= 0.0 &&
              cfg.f_max <= cfg.sample_rate / 2.0 + 1e-9,
          ErrorKind::Config, "mel_filterbank: invalid band limits");
  const std::size_t bins = cfg.n_fft / 2 + 1;
  MelFilterbank fb;
  fb.f_min = cfg.f_min;
  fb.f_max = cfg.f_max;
  fb.weights = Matrix(cfg.n_mels, bins);
  const double mlo = hz_to_mel_slaney(cfg.f_min);
  const double mhi = hz_to_mel_slaney(cfg.f_max);
  for (std::size_t i = 0; i < cfg.n_mels + 2; ++i)
    fb.edges_hz.push_back(mel_to_hz_slaney(mlo + (mhi - mlo) * static_cast<double>(i) /
                                                     static_cast<double>(cfg.n_mels + 1)));
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.n_fft);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = fb.edges_hz[m], mid = fb.edges_hz[m + 1], hi = fb.edges_hz[m + 2];
    const double enorm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      fb.weights(m, k) = std::max(0.0, w) * enorm;
    }
  }
  return fb;
}

inline const MelFilterbank& cached_filterbank(const MelConfig& cfg) {
  thread_local std::map<std::tuple<int, std::size_t, std::size_t, double, double>, MelFilterbank> cache;
  const auto key = std::make_tuple(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.f_min, cfg.f_max);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, mel_filterbank(cfg)).first;
  return it->second;
}

/// Power-spectrum -> mel-power weights, then log with the 1e-10 floor.
inline Matrix log_mel_from_power(const Matrix& power, const MelFilterbank& fb) {
  Matrix mel = matmul(power, transpose(fb.weights));
  for (double& v : mel.data()) v = std::log(v + kLogFloor);
  return mel;
}

inline MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {}) {
  require(w.sample_rate == cfg.sample_rate, ErrorKind::InvalidInput,
          "mel_spectrogram: sample rate " + std::to_string(w.sample_rate) + " != " +
              std::to_string(cfg.sample_rate));
  const Spectrogram s = stft(w.samples, {cfg.n_fft, cfg.hop});
  Matrix power(s.frames, s.bins);
  for (std::size_t i = 0; i < s.data.size(); ++i) power[i] = std::norm(s.data[i]);
  return {log_mel_from_power(power, cached_filterbank(cfg)), cfg.sample_rate, cfg.hop};
}

/// Orthonormal DCT-II across mel bands, keeping c0 .. c_{n-1}.
inline Matrix mel_cepstra(const Matrix& log_mel, std::size_t n_coeffs) {
  const std::size_t n = log_mel.cols();
  require(n_coeffs >= 1 && n_coeffs <= n, ErrorKind::Shape,
          "mel_cepstra: n_coeffs " + std::to_string(n_coeffs) + " exceeds " + std::to_string(n) + " bands");
  Matrix basis(n_coeffs, n);
  for (std::size_t k = 0; k < n_coeffs; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t m = 0; m < n; ++m)
      basis(k, m) = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(m) + 1.0) /
                                 (2.0 * static_cast<double>(n)));
  }
  return matmul(log_mel, transpose(basis));
}

inline Matrix mel_cepstra(const MelSpectrogram& m, std::size_t n_coeffs) {
  return mel_cepstra(m.frames, n_coeffs);
}

// ---------------------------------------------------------------------------
// Griffin-Lim.

/// (n_fft/2+1) x n_mels Moore-Penrose inverse of the filterbank.
inline Matrix mel_pseudo_inverse(const MelFilterbank& fb) {
  Eigen::MatrixXd w(fb.weights.rows(), fb.weights.cols());
  for (std::size_t i = 0; i < fb.weights.rows(); ++i)
    for (std::size_t j = 0; j < fb.weights.cols(); ++j) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fb.weights(i, j);
  const Eigen::MatrixXd pinv = w.completeOrthogonalDecomposition().pseudoInverse();
  Matrix out(static_cast<std::size_t>(pinv.rows()), static_cast<std::size_t>(pinv.cols()));
  for (Eigen::Index i = 0; i < pinv.rows(); ++i)
    for (Eigen::Index j = 0; j < pinv.cols(); ++j) out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = pinv(i, j);
  return out;
}

inline constexpr std::size_t kMelInverseRefinements = 30;
inline constexpr double kMelInverseSharpness = 256.0;

/// Linear magnitude estimate (T x bins) from log-mel frames. Starts from the
/// clipped pseudo-inverse solution weighted by cos(m_t, W_k)^sharpness, the
/// match between each frame and each bin's filter response, then refines with
/// multiplicative non-negative least-squares updates P <- P * (M W) / (P W^T W).
inline Matrix mel_to_magnitude(const Matrix& log_mel, const MelConfig& cfg,
                               std::size_t refinements = kMelInverseRefinements) {
  require(log_mel.cols() == cfg.n_mels, ErrorKind::Shape, "mel_to_magnitude: band count mismatch");
  thread_local std::map<std::tuple<int, std::size_t, std::size_t, double, double>, Matrix> cache;
  const auto key = std::make_tuple(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.f_min, cfg.f_max);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, transpose(mel_pseudo_inverse(cached_filterbank(cfg)))).first;
  const Matrix& fb = cached_filterbank(cfg).weights;  // n_mels x bins
  const Matrix mel_power = map(log_mel, [](double v) { return std::max(std::exp(v) - kLogFloor, 0.0); });
  Matrix power = map(matmul(mel_power, it->second), [](double v) { return std::max(v, 0.0); });
  const Matrix numer = matmul(mel_power, fb);
  std::vector<double> col_norm(fb.cols(), 0.0);
  for (std::size_t m = 0; m < fb.rows(); ++m)
    for (std::size_t k = 0; k < fb.cols(); ++k) col_norm[k] += fb(m, k) * fb(m, k);
  for (std::size_t t = 0; t < power.rows(); ++t) {
    const double frame_norm = norm(mel_power.row(t));
    for (std::size_t k = 0; k < power.cols(); ++k) {
      const double denom = frame_norm * std::sqrt(col_norm[k]);
      const double match = denom > 0.0 ? numer(t, k) / denom : 0.0;
      power(t, k) = power(t, k) * std::pow(std::clamp(match, 0.0, 1.0), kMelInverseSharpness) + kLogFloor;
    }
  }
  if (refinements > 0) {
    const Matrix gram = matmul(transpose(fb), fb);
    for (std::size_t r = 0; r < refinements; ++r) {
      const Matrix denom = matmul(power, gram);
      for (std::size_t i = 0; i < power.size(); ++i) power[i] *= numer[i] / (denom[i] + 1e-30);
    }
  }
  return map(power, [](double v) { return std::sqrt(v); });
}

/// || |stft(x)| - target || / || target || over matching frames.
inline double spectral_convergence(const Matrix& target_mag, std::span<const double> x, const StftConfig& cfg) {
  const Matrix mag = stft(x, cfg).magnitude();
  const std::size_t t = std::min(mag.rows(), target_mag.rows());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < mag.cols(); ++k) {
      const double d = mag(i, k) - target_mag(i, k);
      num += d * d;
      den += target_mag(i, k) * target_mag(i, k);
    }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Phase reconstruction from a magnitude spectrogram, starting from zero phase.
inline Vector griffin_lim_magnitude(const Matrix& mag, std::size_t iters, const StftConfig& cfg) {
  require(iters >= 1, ErrorKind::InvalidInput, "griffin_lim: iters must be >= 1");
  require(mag.cols() == cfg.n_fft / 2 + 1, ErrorKind::Shape, "griffin_lim: bin count mismatch");
  require(mag.rows() >= 2 && (mag.rows() - 1) * cfg.hop > cfg.n_fft / 2, ErrorKind::InvalidInput,
          "griffin_lim: need at least " + std::to_string(cfg.n_fft / (2 * cfg.hop) + 2) + " frames");
  Spectrogram s;
  s.frames = mag.rows();
  s.bins = mag.cols();
  s.n_fft = cfg.n_fft;
  s.hop = cfg.hop;
  s.data.assign(mag.storage().begin(), mag.storage().end());
  Vector x = istft(s);
  for (std::size_t it = 0; it < iters; ++it) {
    const Spectrogram re = stft(x, cfg);
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t k = 0; k < s.bins; ++k) {
        const Complex z = re.at(t, k);
        const double a = std::abs(z);
        s.at(t, k) = a > 0.0 ? mag(t, k) * (z / a) : Complex(mag(t, k), 0.0);
      }
    x = istft(s);
  }
  return x;
}

/// Log-mel -> waveform of (T-1)*hop samples.
inline Waveform griffin_lim(const MelSpectrogram& m, std::size_t iters, const MelConfig& cfg = {}) {
  const Matrix mag = mel_to_magnitude(m.frames, cfg);
  return {griffin_lim_magnitude(mag, iters, {cfg.n_fft, cfg.hop}), cfg.sample_rate};
}

}  // namespace emoforge
