#pragma once

// Toy emotional TTS: character encoder -> emotion conditioning -> duration
// expansion -> position-wise mel decoder -> Griffin-Lim.
//
// Injection point per variant:
//   Concat          [h_lg | u_emo | u_spk] per character
//   CrossAttention  h_lg + attention over c = proj([u_emo | u_spk])
//   CouplingFlow    one affine coupling step on h_lg conditioned on [u_emo | u_spk]
// All three are frame-wise, so conditioning before or after duration
// expansion gives the same decoder input. The duration head reads the
// conditioned features.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "emoforge/adam.hpp"
#include "emoforge/autodiff.hpp"
#include "emoforge/dsp.hpp"
#include "emoforge/emi_condition.hpp"
#include "emoforge/model.hpp"
#include "emoforge/rng.hpp"
#include "emoforge/vocab.hpp"

namespace emoforge {

enum class CondMechanism { CouplingFlow, CrossAttention, Concat };

/// CLI names follow the backbone each mechanism comes from.
inline const char* to_string(CondMechanism m) {
  switch (m) {
    case CondMechanism::CouplingFlow: return "vits";
    case CondMechanism::CrossAttention: return "fastspeech";
    case CondMechanism::Concat: return "tacotron";
  }
  return "?";
}

inline CondMechanism parse_mechanism(std::string_view s) {
  if (s == "vits" || s == "coupling") return CondMechanism::CouplingFlow;
  if (s == "fastspeech" || s == "attention") return CondMechanism::CrossAttention;
  if (s == "tacotron" || s == "concat") return CondMechanism::Concat;
  fail(ErrorKind::Config, "unknown variant '" + std::string(s) + "' (expected vits, fastspeech or tacotron)");
}

inline constexpr std::size_t kMinDuration = 1;
inline constexpr std::size_t kMaxDuration = 20;

struct TtsConfig {
  CondMechanism variant = CondMechanism::CouplingFlow;
  std::size_t char_dim = 32;  // L
  std::size_t emo_dim = 32;   // E
  std::size_t spk_dim = 8;    // S
  std::size_t speakers = 4;
  std::size_t hidden = 64;
  std::size_t n_mels = 40;
  std::uint64_t seed = 42;

  std::size_t cond_dim() const { return emo_dim + spk_dim; }
  std::size_t feature_dim() const {
    return variant == CondMechanism::Concat ? char_dim + cond_dim() : char_dim;
  }
  void validate() const {
    require(char_dim >= 2 && char_dim % 2 == 0, ErrorKind::Config, "char_dim must be even and >= 2");
    require(speakers >= 1, ErrorKind::Config, "need at least one speaker");
    require(hidden >= 1 && n_mels >= 1, ErrorKind::Config, "hidden and n_mels must be >= 1");
  }
};

template <class T>
struct TtsWeights {
  T char_table;      // |vocab| x L
  T enc_w, enc_b;    // L x L, 1 x L
  T spk_table;       // speakers x S
  T dur_w, dur_b;    // F x 1, 1 x 1
  T dec_w1, dec_b1;  // F x H, 1 x H
  T dec_w2, dec_b2;  // H x N_mel, 1 x N_mel
  AttentionWeights<T> attention;
  CouplingWeights<T> coupling;

  template <class F> void visit(F&& f) { visit_members(*this, f); }
  template <class F> void visit(F&& f) const { visit_members(*this, f); }

 private:
  template <class S, class F>
  static void visit_members(S& s, F& f) {
    f("char_table", s.char_table);
    f("enc_w", s.enc_w);
    f("enc_b", s.enc_b);
    f("spk_table", s.spk_table);
    f("dur_w", s.dur_w);
    f("dur_b", s.dur_b);
    f("dec_w1", s.dec_w1);
    f("dec_b1", s.dec_b1);
    f("dec_w2", s.dec_w2);
    f("dec_b2", s.dec_b2);
    s.attention.visit([&](const char* name, auto& m) { f(("attention." + std::string(name)).c_str(), m); });
    s.coupling.visit([&](const char* name, auto& m) { f(("coupling." + std::string(name)).c_str(), m); });
  }
};

struct TtsParams {
  TtsConfig config;
  TtsWeights<Matrix> weights;

  /// Shared weights come from a variant-independent stream, so variants with
  /// equal feature width start from the same encoder, duration head and decoder.
  static TtsParams init(const TtsConfig& cfg) {
    cfg.validate();
    const std::size_t l = cfg.char_dim, f = cfg.feature_dim(), h = cfg.hidden;
    Rng shared = Rng::stream(cfg.seed, "tts.init.shared");
    TtsParams p{cfg, {}};
    auto& w = p.weights;
    w.char_table = shared.normal_matrix(kVocab.size(), l, 1.0);
    w.enc_w = shared.normal_matrix(l, l, 1.0 / std::sqrt(static_cast<double>(l)));
    w.enc_b = Matrix(1, l);
    w.spk_table = shared.normal_matrix(cfg.speakers, cfg.spk_dim, 1.0);
    w.dur_w = shared.normal_matrix(f, 1, 0.1 / std::sqrt(static_cast<double>(f)));
    w.dur_b = Matrix(1, 1);
    w.dec_w1 = shared.normal_matrix(f, h, 1.0 / std::sqrt(static_cast<double>(f)));
    w.dec_b1 = Matrix(1, h);
    w.dec_w2 = shared.normal_matrix(h, cfg.n_mels, 1.0 / std::sqrt(static_cast<double>(h)));
    w.dec_b2 = Matrix(1, cfg.n_mels);

    Rng cond = Rng::stream(cfg.seed, std::string("tts.init.") + to_string(cfg.variant));
    w.attention = attention_zeros(0, 0);
    w.coupling = CouplingParams{Matrix(), Matrix(), Matrix(), Matrix(), Matrix(), Matrix(), Matrix()};
    if (cfg.variant == CondMechanism::CrossAttention) {
      w.attention = attention_random(l, cfg.cond_dim(), cond, 1.0 / std::sqrt(static_cast<double>(l)));
    } else if (cfg.variant == CondMechanism::CouplingFlow) {
      w.coupling = coupling_random(l, cfg.cond_dim(), cond, 0.3);
      w.coupling.w_out = Matrix(l / 2, l);  // starts as the identity flow
    }
    return p;
  }
};

namespace tts_detail {

inline Matrix lift(const Matrix& m, const Matrix&) { return m; }
inline ad::Var lift(const Matrix& m, const ad::Var& like) { return like.tape->constant(m); }

/// Channels 2k, 2k+1 carry sin/cos(pi (k+1) p) of the relative position
/// p = (i + 0.5) / n.
inline Matrix position_encoding(std::size_t n, std::size_t dim) {
  Matrix pe(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    for (std::size_t c = 0; c < dim; ++c) {
      const double freq = std::numbers::pi * static_cast<double>(c / 2 + 1);
      pe(i, c) = c % 2 == 0 ? std::sin(freq * p) : std::cos(freq * p);
    }
  }
  return pe;
}

inline std::vector<std::size_t> char_ids(std::string_view normalized) {
  std::vector<std::size_t> ids;
  ids.reserve(normalized.size());
  for (char c : normalized) ids.push_back(vocab_index(c));
  return ids;
}

template <class T>
T text_encode(const std::vector<std::size_t>& ids, const TtsWeights<T>& w) {
  const T emb = gather_rows(w.char_table, ids);
  const T pe = lift(position_encoding(ids.size(), emb.cols()), emb);
  return tanh(add_row(matmul(add(emb, pe), w.enc_w), w.enc_b));
}

template <class T>
T condition(const T& h_lg, const T& cond_row, CondMechanism variant, const TtsWeights<T>& w) {
  switch (variant) {
    case CondMechanism::Concat: return cond_detail::concat_condition(h_lg, cond_row);
    case CondMechanism::CrossAttention:
      return cond_detail::cross_attention(h_lg, cond_detail::build_condition(cond_row, w.attention), w.attention);
    case CondMechanism::CouplingFlow: return cond_detail::coupling_forward(h_lg, cond_row, w.coupling).first;
  }
  fail(ErrorKind::Config, "unknown conditioning variant");
}

template <class T>
T duration_head(const T& h_cond, const TtsWeights<T>& w) {
  return softplus(add_row(matmul(h_cond, w.dur_w), w.dur_b));
}

template <class T>
T decode(const T& frames, const TtsWeights<T>& w) {
  return add_row(matmul(tanh(add_row(matmul(frames, w.dec_w1), w.dec_b1)), w.dec_w2), w.dec_b2);
}

/// Row index into the character sequence for every output frame.
inline std::vector<std::size_t> expand_index(std::span<const std::size_t> durations) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < durations.size(); ++i) idx.insert(idx.end(), durations[i], i);
  return idx;
}

}  // namespace tts_detail

inline std::string tts_text(std::string_view text) {
  std::string t = normalize_tts_text(text);
  require(!t.empty(), ErrorKind::InvalidInput, "text is empty after normalization: '" + std::string(text) + "'");
  return t;
}

/// h_lg, one row per normalized character.
inline Matrix text_encode(std::string_view text, const TtsParams& p) {
  return tts_detail::text_encode(tts_detail::char_ids(tts_text(text)), p.weights);
}

inline Vector speaker_vector(std::size_t speaker, const TtsParams& p) {
  require(speaker < p.config.speakers, ErrorKind::InvalidInput,
          "speaker " + std::to_string(speaker) + " out of range [0, " + std::to_string(p.config.speakers) + ")");
  const auto row = p.weights.spk_table.row(speaker);
  return {row.begin(), row.end()};
}

inline Matrix condition_features(const Matrix& h_lg, std::span<const double> u_emo, std::span<const double> u_spk,
                                 const TtsParams& p) {
  require(u_emo.size() == p.config.emo_dim && u_spk.size() == p.config.spk_dim, ErrorKind::Shape,
          "condition: expected u_emo dim " + std::to_string(p.config.emo_dim) + " and u_spk dim " +
              std::to_string(p.config.spk_dim));
  Vector cond(u_emo.begin(), u_emo.end());
  cond.insert(cond.end(), u_spk.begin(), u_spk.end());
  return tts_detail::condition(h_lg, Matrix::row_vector(cond), p.config.variant, p.weights);
}

/// Head output before rounding (softplus of a linear map), one per row.
inline Vector raw_durations(const Matrix& h_cond, const TtsParams& p) {
  require(h_cond.cols() == p.weights.dur_w.rows(), ErrorKind::Shape,
          "predict_durations: feature dim " + std::to_string(h_cond.cols()) + " != " +
              std::to_string(p.weights.dur_w.rows()));
  return tts_detail::duration_head(h_cond, p.weights).storage();
}

inline std::vector<std::size_t> round_durations(std::span<const double> raw) {
  std::vector<std::size_t> d;
  d.reserve(raw.size());
  for (double r : raw) {
    const double v = std::isfinite(r) ? std::round(r) : static_cast<double>(kMaxDuration);
    d.push_back(static_cast<std::size_t>(
        std::clamp(v, static_cast<double>(kMinDuration), static_cast<double>(kMaxDuration))));
  }
  return d;
}

inline std::vector<std::size_t> predict_durations(const Matrix& h_cond, const TtsParams& p) {
  return round_durations(raw_durations(h_cond, p));
}

/// Decoder output for given durations (teacher or predicted).
inline Matrix decode_mel(const Matrix& h_cond, std::span<const std::size_t> durations, const TtsParams& p) {
  require(durations.size() == h_cond.rows(), ErrorKind::Shape, "decode_mel: one duration per character required");
  return tts_detail::decode(gather_rows(h_cond, tts_detail::expand_index(durations)), p.weights);
}

struct SynthResult {
  Waveform waveform;
  MelSpectrogram mel;
  std::vector<std::size_t> durations;
};

inline constexpr std::size_t kGriffinLimIters = 32;

inline SynthResult synthesize(std::string_view text, std::span<const double> u_emo, std::span<const double> u_spk,
                              const TtsParams& p, std::size_t gl_iters = kGriffinLimIters) {
  const Matrix h_cond = condition_features(text_encode(text, p), u_emo, u_spk, p);
  SynthResult r;
  r.durations = predict_durations(h_cond, p);
  r.mel.frames = decode_mel(h_cond, r.durations, p);
  r.mel.sample_rate = MelConfig{}.sample_rate;
  r.mel.hop = MelConfig{}.hop;
  MelConfig mc;
  mc.n_mels = p.config.n_mels;
  r.waveform = griffin_lim(r.mel, gl_iters, mc);
  return r;
}

inline SynthResult synthesize(std::string_view text, std::span<const double> u_emo, std::size_t speaker,
                              const TtsParams& p, std::size_t gl_iters = kGriffinLimIters) {
  return synthesize(text, u_emo, speaker_vector(speaker, p), p, gl_iters);
}

// ---------------------------------------------------------------------------
// Training.

struct TtsExample {
  std::string text;  // normalized
  std::size_t emotion = 0;
  std::size_t speaker = 0;
  std::vector<std::size_t> durations;  // teacher, one per character
  Matrix mel;                          // at least sum(durations) frames
};

/// Pairs a reference recording with its teacher durations.
inline TtsExample make_example(std::string_view text, std::size_t emotion, std::size_t speaker,
                               std::vector<std::size_t> durations, const Waveform& reference,
                               const MelConfig& cfg = {}) {
  TtsExample ex{tts_text(text), emotion, speaker, std::move(durations), mel_spectrogram(reference, cfg).frames};
  require(ex.durations.size() == ex.text.size(), ErrorKind::InvalidInput,
          "example '" + ex.text + "': " + std::to_string(ex.durations.size()) + " durations for " +
              std::to_string(ex.text.size()) + " characters");
  const std::size_t total = std::accumulate(ex.durations.begin(), ex.durations.end(), std::size_t{0});
  require(std::ranges::all_of(ex.durations, [](std::size_t d) { return d >= 1; }), ErrorKind::InvalidInput,
          "example '" + ex.text + "': durations must be >= 1");
  require(ex.mel.rows() >= total, ErrorKind::InvalidInput,
          "example '" + ex.text + "': reference has " + std::to_string(ex.mel.rows()) + " frames, durations need " +
              std::to_string(total));
  return ex;
}

struct TrainTtsConfig {
  std::size_t steps = 2000;
  std::size_t batch = 4;
  double lr = 3e-3;
  double duration_weight = 0.1;
  std::size_t eval_every = 100;
};

struct TrainTtsResult {
  TtsParams params;
  std::vector<double> loss_curve;   // full-corpus loss at step 0, every eval_every steps and at the end
  std::vector<double> step_losses;  // minibatch loss of every step
};

namespace tts_detail {

template <class T>
T example_loss(const TtsExample& ex, const Matrix& u_emo_row, const TtsWeights<T>& w, const TtsConfig& cfg,
               double duration_weight) {
  const T h_lg = text_encode(char_ids(ex.text), w);
  const T cond_row = concat_cols(lift(u_emo_row, h_lg), gather_rows(w.spk_table, std::vector<std::size_t>{ex.speaker}));
  const T h_cond = condition(h_lg, cond_row, cfg.variant, w);
  const auto idx = expand_index(ex.durations);
  const T mel = decode(gather_rows(h_cond, idx), w);
  Matrix target(idx.size(), ex.mel.cols());
  std::copy_n(ex.mel.data().begin(), target.size(), target.data().begin());
  Matrix teacher(ex.durations.size(), 1);
  for (std::size_t i = 0; i < ex.durations.size(); ++i) teacher[i] = static_cast<double>(ex.durations[i]);
  const T mel_loss = mean(square(sub(mel, lift(target, mel))));
  const T dur_loss = mean(square(sub(duration_head(h_cond, w), lift(teacher, mel))));
  return add(mel_loss, scale(dur_loss, duration_weight));
}

}  // namespace tts_detail

/// Mean example loss over `data` without updating anything.
inline double tts_loss(std::span<const TtsExample> data, const Matrix& emotion_table, const TtsParams& p,
                       double duration_weight = TrainTtsConfig{}.duration_weight) {
  require(!data.empty(), ErrorKind::InvalidInput, "tts_loss: empty data");
  double total = 0.0;
  for (const auto& ex : data)
    total += tts_detail::example_loss(ex, Matrix::row_vector(emotion_table.row(ex.emotion)), p.weights, p.config,
                                      duration_weight)
                 .item();
  return total / static_cast<double>(data.size());
}

/// `emotion_table` row c is the emotion vector u_emo used for label c.
inline TrainTtsResult train_tts(std::span<const TtsExample> data, const Matrix& emotion_table, const TtsConfig& cfg,
                                const TrainTtsConfig& tc = {}) {
  require(!data.empty(), ErrorKind::Config, "train_tts: empty corpus");
  require(tc.batch >= 1 && tc.batch <= data.size(), ErrorKind::Config,
          "train_tts: batch " + std::to_string(tc.batch) + " must be in [1, " + std::to_string(data.size()) + "]");
  require(tc.eval_every >= 1, ErrorKind::Config, "train_tts: eval_every must be >= 1");
  require(tc.lr >= 0.0, ErrorKind::Config, "train_tts: lr must be >= 0");
  require(emotion_table.cols() == cfg.emo_dim, ErrorKind::Shape, "train_tts: emotion table width != emo_dim");
  for (const auto& ex : data) {
    require(ex.emotion < emotion_table.rows(), ErrorKind::InvalidLabel,
            "train_tts: emotion " + std::to_string(ex.emotion) + " has no row in the emotion table");
    require(ex.speaker < cfg.speakers, ErrorKind::InvalidInput,
            "train_tts: speaker " + std::to_string(ex.speaker) + " out of range");
    require(ex.mel.cols() == cfg.n_mels, ErrorKind::Shape, "train_tts: reference mel band count != n_mels");
  }

  TrainTtsResult result{TtsParams::init(cfg), {}, {}};
  // Decoder output bias starts at the corpus mean log-mel.
  Matrix& bias = result.params.weights.dec_b2;
  std::size_t frames = 0;
  for (const auto& ex : data) {
    const std::size_t n = std::accumulate(ex.durations.begin(), ex.durations.end(), std::size_t{0});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k < cfg.n_mels; ++k) bias[k] += ex.mel(t, k);
    frames += n;
  }
  for (double& b : bias.data()) b /= static_cast<double>(frames);
  result.loss_curve.push_back(tts_loss(data, emotion_table, result.params, tc.duration_weight));

  Rng rng = Rng::stream(cfg.seed, "tts.batches");
  AdamState state;
  const AdamConfig adam{tc.lr};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::vector<std::size_t> batch;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const double loss = optimize_step<TtsWeights>(
        result.params.weights,
        [&](ad::Tape&, const TtsWeights<ad::Var>& w) {
          ad::Var total = tts_detail::example_loss(data[batch[0]], Matrix::row_vector(emotion_table.row(data[batch[0]].emotion)),
                                                   w, cfg, tc.duration_weight);
          for (std::size_t b = 1; b < batch.size(); ++b) {
            const TtsExample& ex = data[batch[b]];
            total = add(total, tts_detail::example_loss(ex, Matrix::row_vector(emotion_table.row(ex.emotion)), w, cfg,
                                                        tc.duration_weight));
          }
          return scale(total, 1.0 / static_cast<double>(batch.size()));
        },
        state, adam);
    result.step_losses.push_back(loss);
    if ((step + 1) % tc.eval_every == 0 || step + 1 == tc.steps)
      result.loss_curve.push_back(tts_loss(data, emotion_table, result.params, tc.duration_weight));
  }
  return result;
}

}  // namespace emoforge
