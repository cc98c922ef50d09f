#pragma once

// Objective evaluation: WER / CER (Levenshtein), MCD over DTW-aligned
// mel-cepstra, speaker-embedding cosine similarity, and MOS aggregation with
// Student-t confidence intervals.

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emoforge/dsp.hpp"

namespace emoforge {

// ---------------------------------------------------------------------------
// Edit distance.

struct EditOps {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t distance = 0;
};

/// Levenshtein alignment of `hyp` against `ref`. When several optimal
/// alignments exist the backtrace prefers substitution, then deletion, then
/// insertion, so the op counts are deterministic.
template <class Token>
EditOps edit_distance(std::span<const Token> ref, std::span<const Token> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});

  EditOps ops;
  ops.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      ops.substitutions += ref[i - 1] == hyp[j - 1] ? 0 : 1;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

template <class Token>
EditOps edit_distance(const std::vector<Token>& ref, const std::vector<Token>& hyp) {
  return edit_distance<Token>(std::span<const Token>(ref), std::span<const Token>(hyp));
}

/// Lowercase, map everything outside [a-z0-9' ] to a space, collapse runs of
/// whitespace and trim.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
    if (!keep) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

struct ErrorRate {
  EditOps ops;
  std::size_t ref_length = 0;
  double rate() const { return static_cast<double>(ops.distance) / static_cast<double>(ref_length); }
};

inline ErrorRate word_errors(std::string_view ref_text, std::string_view hyp_text) {
  const auto ref = split_words(normalize_text(ref_text));
  const auto hyp = split_words(normalize_text(hyp_text));
  require(!ref.empty(), ErrorKind::UndefinedMetric, "WER: reference is empty after normalization");
  return {edit_distance(ref, hyp), ref.size()};
}

inline ErrorRate char_errors(std::string_view ref_text, std::string_view hyp_text) {
  const std::string ref = normalize_text(ref_text);
  const std::string hyp = normalize_text(hyp_text);
  require(!ref.empty(), ErrorKind::UndefinedMetric, "CER: reference is empty after normalization");
  const std::vector<char> r(ref.begin(), ref.end()), h(hyp.begin(), hyp.end());
  return {edit_distance(r, h), r.size()};
}

inline double wer(std::string_view ref_text, std::string_view hyp_text) {
  return word_errors(ref_text, hyp_text).rate();
}
inline double cer(std::string_view ref_text, std::string_view hyp_text) {
  return char_errors(ref_text, hyp_text).rate();
}

// ---------------------------------------------------------------------------
// DTW and MCD.

struct DtwResult {
  std::vector<std::pair<std::size_t, std::size_t>> path;
  double cost = 0.0;  // summed Euclidean frame distance along the path
};

/// Monotone alignment with steps (1,0), (0,1), (1,1) minimizing summed
/// Euclidean cost. Equal-cost predecessors are ranked by path length
/// (shorter first), then diagonal, vertical, horizontal.
inline DtwResult dtw_align(const Matrix& a, const Matrix& b) {
  require(a.rows() >= 1 && b.rows() >= 1, ErrorKind::Shape, "dtw_align: empty sequence");
  require(a.cols() == b.cols(), ErrorKind::Shape,
          "dtw_align: feature dims " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  const std::size_t n = a.rows(), m = b.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(n * m, inf);
  std::vector<std::size_t> len(n * m, 0);
  std::vector<unsigned char> from(n * m, 0);  // 0 start, 1 diag, 2 up (i-1), 3 left (j-1)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double dlt = a(i, k) - b(j, k);
        s += dlt * dlt;
      }
      const double c = std::sqrt(s);
      const std::size_t idx = i * m + j;
      if (i == 0 && j == 0) {
        acc[idx] = c;
        len[idx] = 1;
        continue;
      }
      double best = inf;
      std::size_t best_len = 0;
      unsigned char best_from = 0;
      auto consider = [&](bool ok, std::size_t p, unsigned char tag) {
        if (!ok) return;
        if (acc[p] < best || (acc[p] == best && len[p] < best_len)) {
          best = acc[p];
          best_len = len[p];
          best_from = tag;
        }
      };
      consider(i > 0 && j > 0, idx - m - 1, 1);
      consider(i > 0, idx - m, 2);
      consider(j > 0, idx - 1, 3);
      acc[idx] = c + best;
      len[idx] = best_len + 1;
      from[idx] = best_from;
    }
  }
  DtwResult r;
  r.cost = acc[n * m - 1];
  std::size_t i = n - 1, j = m - 1;
  for (;;) {
    r.path.emplace_back(i, j);
    const unsigned char f = from[i * m + j];
    if (f == 0) break;
    if (f == 1) --i, --j;
    else if (f == 2) --i;
    else --j;
  }
  std::reverse(r.path.begin(), r.path.end());
  return r;
}

inline constexpr std::size_t kMcdCoefficients = 13;  // c1..c13

/// Mel-cepstral distortion in dB between two cepstral sequences whose
/// columns are c1..cK (c0 already removed).
inline double mcd_from_cepstra(const Matrix& ref, const Matrix& syn) {
  const DtwResult d = dtw_align(ref, syn);
  return 10.0 / std::numbers::ln10 * std::numbers::sqrt2 * d.cost / static_cast<double>(d.path.size());
}

inline Matrix mcd_cepstra(const Waveform& w, const MelConfig& cfg) {
  const Matrix c = mel_cepstra(mel_spectrogram(w, cfg), kMcdCoefficients + 1);
  return slice_cols(c, 1, c.cols());
}

inline double mcd(const Waveform& ref, const Waveform& syn, const MelConfig& cfg = {}) {
  require(ref.sample_rate == syn.sample_rate, ErrorKind::InvalidInput,
          "mcd: sample rates differ (" + std::to_string(ref.sample_rate) + " vs " +
              std::to_string(syn.sample_rate) + ")");
  return mcd_from_cepstra(mcd_cepstra(ref, cfg), mcd_cepstra(syn, cfg));
}

// ---------------------------------------------------------------------------
// Speaker similarity.

inline constexpr std::size_t kMinEmbeddingFrames = 5;

/// Unit vector [per-band mean | per-band std] of the log-mel frames.
inline Vector speaker_embedding(const Waveform& w, const MelConfig& cfg = {}) {
  require(w.samples.size() > cfg.n_fft / 2, ErrorKind::InvalidInput, "speaker_embedding: waveform too short");
  const Matrix mel = mel_spectrogram(w, cfg).frames;
  require(mel.rows() >= kMinEmbeddingFrames, ErrorKind::InvalidInput,
          "speaker_embedding: need >= 5 mel frames, got " + std::to_string(mel.rows()));
  const std::size_t bands = mel.cols();
  Vector e(2 * bands, 0.0);
  const double t = static_cast<double>(mel.rows());
  for (std::size_t b = 0; b < bands; ++b) {
    double mu = 0.0;
    for (std::size_t i = 0; i < mel.rows(); ++i) mu += mel(i, b);
    mu /= t;
    double var = 0.0;
    for (std::size_t i = 0; i < mel.rows(); ++i) var += (mel(i, b) - mu) * (mel(i, b) - mu);
    e[b] = mu;
    e[bands + b] = std::sqrt(var / t);
  }
  return l2_normalize(e);
}

inline double secs(const Waveform& ref, const Waveform& syn, const MelConfig& cfg = {}) {
  return cosine_similarity(speaker_embedding(ref, cfg), speaker_embedding(syn, cfg));
}

// ---------------------------------------------------------------------------
// MOS aggregation.

struct MosSummary {
  double mean = 0.0;
  double half_width_95 = 0.0;
  std::size_t n = 0;

  /// "4.02(±0.07)"
  std::string str() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f(±%.2f)", mean, half_width_95);
    return buf;
  }
};

/// Two-sided 95% Student-t interval around the sample mean.
inline MosSummary t_interval(std::span<const double> xs) {
  require(xs.size() >= 2, ErrorKind::InsufficientData,
          "need at least 2 ratings, got " + std::to_string(xs.size()));
  const double n = static_cast<double>(xs.size());
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double tq = boost::math::quantile(dist, 0.975);
  return {mu, tq * sd / std::sqrt(n), xs.size()};
}

/// Ratings must lie on the 1.0, 1.5, ..., 5.0 grid.
inline MosSummary mos_aggregate(std::span<const double> scores) {
  require(scores.size() >= 2, ErrorKind::InsufficientData,
          "need at least 2 ratings, got " + std::to_string(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double twice = scores[i] * 2.0;
    require(std::isfinite(twice) && twice == std::round(twice) && twice >= 2.0 && twice <= 10.0,
            ErrorKind::InvalidInput,
            "rating #" + std::to_string(i + 1) + " (" + std::to_string(scores[i]) +
                ") is not on the 1..5 grid with step 0.5");
  }
  return t_interval(scores);
}

// ---------------------------------------------------------------------------
// Corpus report.

struct UtteranceScores {
  std::string id;
  std::optional<ErrorRate> words;
  std::optional<ErrorRate> chars;
  double mcd = 0.0;
  double secs = 0.0;
};

struct EvalReport {
  std::vector<UtteranceScores> utterances;
  std::optional<double> wer;  // pooled: total edits / total reference tokens
  std::optional<double> cer;
  double mcd_median = 0.0;
  double secs_median = 0.0;
  std::optional<MosSummary> mos;
};

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorKind::InsufficientData, "median of empty list");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct EvalPair {
  std::string id;
  Waveform ref;
  Waveform syn;
  std::optional<std::string> ref_text;
  std::optional<std::string> hyp_text;
};

inline UtteranceScores score_pair(const EvalPair& p, const MelConfig& cfg = {}) {
  UtteranceScores u;
  u.id = p.id;
  if (p.ref_text && p.hyp_text) {
    u.words = word_errors(*p.ref_text, *p.hyp_text);
    u.chars = char_errors(*p.ref_text, *p.hyp_text);
  }
  u.mcd = mcd(p.ref, p.syn, cfg);
  u.secs = secs(p.ref, p.syn, cfg);
  return u;
}

inline EvalReport aggregate(std::vector<UtteranceScores> utts, std::optional<MosSummary> mos = std::nullopt) {
  require(!utts.empty(), ErrorKind::InsufficientData, "evaluation needs at least one utterance pair");
  EvalReport r;
  std::size_t w_edits = 0, w_len = 0, c_edits = 0, c_len = 0;
  std::vector<double> mcds, secss;
  for (const auto& u : utts) {
    if (u.words) {
      w_edits += u.words->ops.distance;
      w_len += u.words->ref_length;
      c_edits += u.chars->ops.distance;
      c_len += u.chars->ref_length;
    }
    mcds.push_back(u.mcd);
    secss.push_back(u.secs);
  }
  if (w_len) r.wer = static_cast<double>(w_edits) / static_cast<double>(w_len);
  if (c_len) r.cer = static_cast<double>(c_edits) / static_cast<double>(c_len);
  r.mcd_median = median(mcds);
  r.secs_median = median(secss);
  r.utterances = std::move(utts);
  r.mos = mos;
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json utts = json::array();
  for (const auto& u : r.utterances)
    utts.push_back({{"id", u.id},
                    {"wer", u.words ? json(u.words->rate()) : json(nullptr)},
                    {"cer", u.chars ? json(u.chars->rate()) : json(nullptr)},
                    {"mcd", u.mcd},
                    {"secs", u.secs}});
  json mos = r.mos ? json{{"mean", r.mos->mean}, {"ci95", r.mos->half_width_95}, {"n", r.mos->n}}
                   : json(nullptr);
  return {{"wer", opt(r.wer)},
          {"cer", opt(r.cer)},
          {"mcd_median", r.mcd_median},
          {"secs_median", r.secs_median},
          {"mos", mos},
          {"n_utts", r.utterances.size()},
          {"utterances", utts}};
}

inline std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "id,wer,cer,mcd,secs\n";
  for (const auto& u : r.utterances) {
    out << u.id << ',';
    if (u.words) out << u.words->rate();
    out << ',';
    if (u.chars) out << u.chars->rate();
    out << ',' << u.mcd << ',' << u.secs << '\n';
  }
  return out.str();
}

}  // namespace emoforge
