#pragma once

// Synthetic multimodal emotion corpus.
//
// Features: for every modality, class c is a Gaussian blob around
// separation * d_c, where the d_c are Gram-Schmidt orthonormalized random
// directions. Audio: every character renders as a harmonic tone segment of
// a fixed, character-dependent length. The speaker sets the base pitch and a
// formant envelope over the harmonics; the emotion sets the pitch contour,
// loudness and spectral slope. A low noise floor, stronger on consonants,
// keeps every band above the log floor.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoforge/ep_align.hpp"
#include "emoforge/rng.hpp"
#include "emoforge/vocab.hpp"
#include "emoforge/wav.hpp"

namespace emoforge {

struct CorpusConfig {
  std::size_t classes = 5;
  std::size_t speakers = 4;
  std::size_t per_class = 200;
  std::size_t dim_vision = 64;
  std::size_t dim_audio = 64;
  std::size_t dim_text = 64;
  double separation = 4.0;
  double noise = 1.0;
  std::uint64_t seed = 42;

  void validate() const {
    require(classes >= 2, ErrorKind::Config, "corpus needs at least 2 classes");
    require(speakers >= 1, ErrorKind::Config, "corpus needs at least 1 speaker");
    require(per_class >= 1, ErrorKind::Config, "corpus needs at least 1 sample per class");
    require(separation > 0.0, ErrorKind::Config, "separation must be > 0");
    require(noise >= 0.0, ErrorKind::Config, "noise must be >= 0");
    for (std::size_t d : {dim_vision, dim_audio, dim_text})
      require(d >= classes, ErrorKind::Config, "feature dims must be >= number of classes");
  }
};

struct Utterance {
  std::string id;
  std::string text;
  std::size_t emotion = 0;
  std::size_t speaker = 0;
  std::string wav;  // relative to the corpus directory
  std::vector<std::size_t> durations;  // frames per character
  Vector feat_vis;
  Vector feat_audio;
  Vector feat_text;

  MultimodalSample sample() const { return {feat_vis, feat_audio, feat_text, emotion}; }
};

struct Corpus {
  CorpusConfig config;
  std::vector<Utterance> utterances;
};

// ---------------------------------------------------------------------------
// Reference audio.

struct RenderConfig {
  int sample_rate = 16000;
  std::size_t hop = 128;
  double breath = 0.01;           // aspiration noise relative to the voiced part
  double consonant_breath = 4.0;  // noise multiplier on consonants
  double gain = 0.6;
};

inline const std::vector<std::string>& text_pool() {
  static const std::vector<std::string> pool = {
      "the quick brown fox",   "jumps over the lazy dog.", "pack my box",
      "with five dozen jugs",  "how vexingly quick",       "daft zebras jump.",
      "sphinx of black quartz", "judge my vow.",           "the five boxing wizards",
      "jump quickly.",          "waltz bad nymph",          "for quick jigs vex.",
      "bright vixens jump",     "dozy fowl quack.",         "quick zephyrs blow",
      "vex bold jim."};
  return pool;
}

/// Teacher duration of one character, in frames.
inline std::size_t char_frames(char c) {
  if (c == ' ') return 3;
  if (c == '.') return 8;
  return is_vowel(c) ? 6 : 4;
}

inline std::vector<std::size_t> char_durations(std::string_view text) {
  std::vector<std::size_t> d;
  for (char c : text) d.push_back(char_frames(c));
  return d;
}

inline double speaker_base_f0(std::size_t speaker) {
  static constexpr std::array<double, 4> base = {110.0, 146.0, 196.0, 246.0};
  return base[speaker % 4] * (1.0 + 0.05 * static_cast<double>(speaker / 4));
}

struct Formant {
  double hz;
  double bandwidth;
};

/// Spectral envelope of a speaker's voice: a small floor plus Gaussian formant bumps.
inline double speaker_envelope(std::size_t speaker, double hz) {
  static const std::array<std::vector<Formant>, 4> formants = {{
      {{400, 150}, {2000, 300}},
      {{800, 200}, {1200, 200}, {2800, 400}},
      {{600, 150}, {3000, 500}},
      {{1000, 250}, {1800, 300}, {4000, 600}},
  }};
  const double stretch = 1.0 + 0.05 * static_cast<double>(speaker / 4);
  double e = 0.05;
  for (const auto& f : formants[speaker % 4]) {
    const double z = (hz - f.hz * stretch) / f.bandwidth;
    e += std::exp(-0.5 * z * z);
  }
  return e;
}

struct EmotionStyle {
  double amplitude;
  double brightness;
};

/// Pitch multiplier of an emotion at relative position p in [0, 1].
inline double emotion_pitch(std::size_t emotion, double p) {
  switch (emotion % 5) {
    case 1: return 1.3 * (0.9 + 0.2 * p);                                 // happy, rising
    case 2: return 0.8 * (1.1 - 0.2 * p);                                 // sad, falling
    case 3: return 1.2;                                                   // angry
    case 4: return 1.4 * (0.92 + 0.16 * std::sin(std::numbers::pi * p));  // surprise, peaked
    default: return 1.0;                                                  // neutral
  }
}

inline EmotionStyle emotion_style(std::size_t emotion) {
  static constexpr std::array<EmotionStyle, 5> styles = {
      {{0.5, 0.6}, {0.6, 0.7}, {0.3, 0.45}, {0.85, 0.85}, {0.6, 0.7}}};
  return styles[emotion % 5];
}

inline Waveform render_reference(std::string_view raw_text, std::size_t emotion, std::size_t speaker,
                                 const RenderConfig& cfg = {}) {
  const std::string text = normalize_tts_text(raw_text);
  require(!text.empty(), ErrorKind::InvalidInput, "render_reference: empty text");
  const EmotionStyle style = emotion_style(emotion);
  const double sr = static_cast<double>(cfg.sample_rate);

  Waveform w{{}, cfg.sample_rate};
  Rng breath = Rng::stream(fnv1a64(text) ^ (emotion * 0x9e3779b97f4a7c15ULL) ^ speaker, "datagen.breath");
  std::vector<std::complex<double>> osc;  // one unit phasor per harmonic
  double env = 0.0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(text.size());
    const double f0 = speaker_base_f0(speaker) * emotion_pitch(emotion, p) *
                      (1.0 + 0.04 * static_cast<double>(vocab_index(c) % 5));
    const double level = c == ' ' ? 0.15 : c == '.' ? 0.1 : 1.0;
    const double target = style.amplitude * level;
    // brighter voices decay more slowly across harmonics
    const double slope = 2.2 - 2.0 * style.brightness * (is_vowel(c) ? 1.0 : 0.75);
    const auto n_harm = static_cast<std::size_t>(0.45 * sr / f0);
    std::vector<double> weight(n_harm);
    std::vector<std::complex<double>> step(n_harm);
    double wsum = 0.0;
    for (std::size_t k = 0; k < n_harm; ++k) {
      const double hz = f0 * static_cast<double>(k + 1);
      weight[k] = speaker_envelope(speaker, hz) * std::pow(static_cast<double>(k + 1), -slope);
      step[k] = std::polar(1.0, 2.0 * std::numbers::pi * hz / sr);
      wsum += weight[k];
    }
    if (osc.size() < n_harm) osc.resize(n_harm, {1.0, 0.0});
    for (auto& z : osc) z /= std::abs(z);
    const double noise_level = cfg.breath * (is_vowel(c) ? 1.0 : cfg.consonant_breath);
    const std::size_t n = char_frames(c) * cfg.hop;
    for (std::size_t s = 0; s < n; ++s) {
      env += (target - env) / 32.0;
      double v = 0.0;
      for (std::size_t k = 0; k < n_harm; ++k) {
        osc[k] *= step[k];
        v += weight[k] * osc[k].imag();
      }
      w.samples.push_back(cfg.gain * env * (v / wsum + noise_level * breath.normal()));
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Features and corpus assembly.

/// `count` orthonormal directions in R^dim (Gram-Schmidt over Gaussian draws).
inline std::vector<Vector> orthonormal_directions(std::size_t count, std::size_t dim, Rng& rng) {
  require(count <= dim, ErrorKind::Config, "cannot draw more orthonormal directions than dimensions");
  std::vector<Vector> dirs;
  while (dirs.size() < count) {
    Vector v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& d : dirs) {
      const double proj = dot(v, d);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * d[i];
    }
    if (norm(v) < 1e-6) continue;
    dirs.push_back(l2_normalize(v));
  }
  return dirs;
}

/// Features, texts, speakers and teacher durations; no audio is rendered.
inline Corpus make_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  std::array<std::vector<Vector>, 3> centroids;
  for (Modality m : kAllModalities) {
    const std::size_t dim = m == Modality::Vision ? cfg.dim_vision : m == Modality::Audio ? cfg.dim_audio : cfg.dim_text;
    Rng crng = Rng::stream(cfg.seed, std::string("datagen.centroids.") + to_string(m));
    centroids[static_cast<std::size_t>(m)] = orthonormal_directions(cfg.classes, dim, crng);
  }
  Rng rng = Rng::stream(cfg.seed, "datagen.samples");
  auto draw = [&](const Vector& dir) {
    Vector v(dir.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = cfg.separation * dir[i] + cfg.noise * rng.normal();
    return v;
  };

  Corpus corpus{cfg, {}};
  const auto& pool = text_pool();
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t k = 0; k < cfg.per_class; ++k) {
      Utterance u;
      char id[32];
      std::snprintf(id, sizeof id, "utt_%05zu", corpus.utterances.size());
      u.id = id;
      u.text = pool[rng.index(pool.size())];
      u.emotion = c;
      u.speaker = rng.index(cfg.speakers);
      u.wav = "wavs/" + u.id + ".wav";
      u.durations = char_durations(normalize_tts_text(u.text));
      u.feat_vis = draw(centroids[0][c]);
      u.feat_audio = draw(centroids[1][c]);
      u.feat_text = draw(centroids[2][c]);
      corpus.utterances.push_back(std::move(u));
    }
  }
  return corpus;
}

inline std::vector<MultimodalSample> samples_of(std::span<const Utterance> utts) {
  std::vector<MultimodalSample> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(u.sample());
  return out;
}

struct Split {
  std::vector<Utterance> train;
  std::vector<Utterance> test;
};

/// Deterministic shuffled hold-out split.
inline Split split_holdout(const Corpus& corpus, double test_fraction = 0.2) {
  std::vector<std::size_t> order(corpus.utterances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(corpus.config.seed, "datagen.split");
  rng.shuffle(order.begin(), order.end());
  const auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(order.size())));
  Split s;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_test ? s.test : s.train).push_back(corpus.utterances[order[i]]);
  return s;
}

// ---------------------------------------------------------------------------
// On-disk layout: DIR/config.json, DIR/manifest.jsonl, DIR/wavs/*.wav

inline nlohmann::json to_json(const CorpusConfig& c) {
  return {{"classes", c.classes},       {"speakers", c.speakers},     {"per_class", c.per_class},
          {"dim_vision", c.dim_vision}, {"dim_audio", c.dim_audio},   {"dim_text", c.dim_text},
          {"separation", c.separation}, {"noise", c.noise},           {"seed", c.seed}};
}

inline CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  CorpusConfig c;
  c.classes = j.at("classes").get<std::size_t>();
  c.speakers = j.at("speakers").get<std::size_t>();
  c.per_class = j.at("per_class").get<std::size_t>();
  c.dim_vision = j.at("dim_vision").get<std::size_t>();
  c.dim_audio = j.at("dim_audio").get<std::size_t>();
  c.dim_text = j.at("dim_text").get<std::size_t>();
  c.separation = j.at("separation").get<double>();
  c.noise = j.at("noise").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json to_json(const Utterance& u) {
  return {{"id", u.id},           {"text", u.text},           {"emotion", u.emotion},
          {"speaker", u.speaker}, {"wav", u.wav},             {"durations", u.durations},
          {"feat_vis", u.feat_vis}, {"feat_audio", u.feat_audio}, {"feat_text", u.feat_text}};
}

inline Utterance utterance_from_json(const nlohmann::json& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.text = j.at("text").get<std::string>();
  u.emotion = j.at("emotion").get<std::size_t>();
  u.speaker = j.at("speaker").get<std::size_t>();
  u.wav = j.at("wav").get<std::string>();
  u.durations = j.at("durations").get<std::vector<std::size_t>>();
  u.feat_vis = j.at("feat_vis").get<Vector>();
  u.feat_audio = j.at("feat_audio").get<Vector>();
  u.feat_text = j.at("feat_text").get<Vector>();
  return u;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes features, manifest and rendered reference audio under `dir`.
inline Corpus gen_corpus(const CorpusConfig& cfg, const std::filesystem::path& dir,
                         const RenderConfig& render = {}) {
  Corpus corpus = make_corpus(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir / "wavs", ec);
  require(!ec, ErrorKind::Io, "cannot create " + (dir / "wavs").string() + ": " + ec.message());
  std::string manifest;
  for (const auto& u : corpus.utterances) {
    manifest += to_json(u).dump() + "\n";
    wav_write(dir / u.wav, render_reference(u.text, u.emotion, u.speaker, render));
  }
  write_text_file(dir / "manifest.jsonl", manifest);
  write_text_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  try {
    corpus.config = corpus_config_from_json(nlohmann::json::parse(read_text_file(dir / "config.json")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, (dir / "config.json").string() + ": " + e.what());
  }
  std::istringstream lines(read_text_file(dir / "manifest.jsonl"));
  std::size_t lineno = 0;
  for (std::string line; std::getline(lines, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      corpus.utterances.push_back(utterance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, (dir / "manifest.jsonl").string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  require(!corpus.utterances.empty(), ErrorKind::Format, (dir / "manifest.jsonl").string() + ": no utterances");
  return corpus;
}

}  // namespace emoforge
