#pragma once

// Emotion prompt alignment.
//
// Each modality (vision, audio, text) has its own encoder, a 2-layer tanh
// MLP, followed by a projection into a shared E-dim space. Emotion prompts
// are rows of a learnable C x E table, projected through the matrix of the
// anchor modality. Training pulls each sample's implicit embedding towards
// its prompt with a symmetric in-batch cross-entropy over temperature-scaled
// cosine logits; inference picks the prompt closest to the fused implicit
// embedding.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emoforge/autodiff.hpp"
#include "emoforge/model.hpp"
#include "emoforge/rng.hpp"

namespace emoforge {

enum class Modality : std::size_t { Vision = 0, Audio = 1, Text = 2 };
inline constexpr std::array<Modality, 3> kAllModalities = {Modality::Vision, Modality::Audio,
                                                          Modality::Text};

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::Vision: return "vis";
    case Modality::Audio: return "audio";
    case Modality::Text: return "tex";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "vis") return Modality::Vision;
  if (s == "audio") return Modality::Audio;
  if (s == "tex") return Modality::Text;
  fail(ErrorKind::Config, "unknown modality '" + std::string(s) + "' (expected vis, audio or tex)");
}

/// Subset of {vis, audio, tex}.
class ModalitySet {
 public:
  ModalitySet() = default;
  ModalitySet(std::initializer_list<Modality> ms) {
    for (Modality m : ms) insert(m);
  }
  static ModalitySet all() { return {Modality::Vision, Modality::Audio, Modality::Text}; }

  /// Comma-separated list such as "vis,audio".
  static ModalitySet parse(std::string_view csv) {
    ModalitySet out;
    std::size_t start = 0;
    while (start <= csv.size()) {
      const std::size_t end = std::min(csv.find(',', start), csv.size());
      if (end > start) out.insert(parse_modality(csv.substr(start, end - start)));
      start = end + 1;
    }
    require(!out.empty(), ErrorKind::Config, "empty modality list");
    return out;
  }

  void insert(Modality m) { bits_[static_cast<std::size_t>(m)] = true; }
  bool contains(Modality m) const { return bits_[static_cast<std::size_t>(m)]; }
  bool empty() const { return count() == 0; }
  std::size_t count() const { return std::size_t(bits_[0]) + bits_[1] + bits_[2]; }

  std::string str() const {
    std::string s;
    for (Modality m : kAllModalities)
      if (contains(m)) s += (s.empty() ? "" : ",") + std::string(to_string(m));
    return s;
  }

  friend bool operator==(const ModalitySet&, const ModalitySet&) = default;

 private:
  std::array<bool, 3> bits_{};
};

inline const std::vector<std::string>& default_emotion_names() {
  static const std::vector<std::string> names = {"neutral", "happy", "sad", "angry", "surprise"};
  return names;
}

/// One training tuple: pre-extracted features per modality plus the prompt label.
struct MultimodalSample {
  Vector vision;
  Vector audio;
  Vector text;
  std::size_t label = 0;

  const Vector& features(Modality m) const {
    switch (m) {
      case Modality::Vision: return vision;
      case Modality::Audio: return audio;
      case Modality::Text: return text;
    }
    return text;
  }
};

struct EpAlignConfig {
  std::size_t dim_vision = 64;
  std::size_t dim_audio = 64;
  std::size_t dim_text = 64;
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t classes = 5;
  Modality anchor = Modality::Text;
  ModalitySet modalities = ModalitySet::all();
  std::uint64_t seed = 42;

  std::size_t input_dim(Modality m) const {
    switch (m) {
      case Modality::Vision: return dim_vision;
      case Modality::Audio: return dim_audio;
      case Modality::Text: return dim_text;
    }
    return 0;
  }
};

template <class T>
struct EncoderWeights {
  T w1, b1, w2, b2;
};

template <class T>
struct EpAlignWeights {
  std::array<EncoderWeights<T>, 3> encoders;
  T prompt_table;                    // C x E
  std::array<T, 3> implicit_proj;    // W^{mu-pro}, E x E
  std::array<T, 3> prompt_proj;      // W^{pro-eta}, E x E
  T log_temperature;                 // 1 x 1

  template <class F> void visit(F&& f) { visit_members(*this, f); }
  template <class F> void visit(F&& f) const { visit_members(*this, f); }

 private:
  template <class S, class F>
  static void visit_members(S& s, F& f) {
    static constexpr const char* kEnc[3][4] = {{"enc.vis.w1", "enc.vis.b1", "enc.vis.w2", "enc.vis.b2"},
                                               {"enc.audio.w1", "enc.audio.b1", "enc.audio.w2", "enc.audio.b2"},
                                               {"enc.tex.w1", "enc.tex.b1", "enc.tex.w2", "enc.tex.b2"}};
    static constexpr const char* kImp[3] = {"proj.vis", "proj.audio", "proj.tex"};
    static constexpr const char* kPro[3] = {"prompt_proj.vis", "prompt_proj.audio", "prompt_proj.tex"};
    for (std::size_t m = 0; m < 3; ++m) {
      f(kEnc[m][0], s.encoders[m].w1);
      f(kEnc[m][1], s.encoders[m].b1);
      f(kEnc[m][2], s.encoders[m].w2);
      f(kEnc[m][3], s.encoders[m].b2);
    }
    f("prompt_table", s.prompt_table);
    for (std::size_t m = 0; m < 3; ++m) f(kImp[m], s.implicit_proj[m]);
    for (std::size_t m = 0; m < 3; ++m) f(kPro[m], s.prompt_proj[m]);
    f("log_temperature", s.log_temperature);
  }
};

inline constexpr double kMaxLogTemperature = 4.605170185988092;  // ln 100

struct EpAlignParams {
  EpAlignConfig config;
  EpAlignWeights<Matrix> weights;

  /// Random initialization from the "ep-align.init" stream of config.seed.
  static EpAlignParams init(const EpAlignConfig& cfg) {
    require(cfg.classes >= 1 && cfg.embed >= 1 && cfg.hidden >= 1, ErrorKind::Config,
            "ep-align dims must be positive");
    Rng rng = Rng::stream(cfg.seed, "ep-align.init");
    EpAlignParams p{cfg, {}};
    for (Modality m : kAllModalities) {
      auto& e = p.weights.encoders[static_cast<std::size_t>(m)];
      const std::size_t d = cfg.input_dim(m);
      e.w1 = rng.normal_matrix(d, cfg.hidden, 1.0 / std::sqrt(static_cast<double>(d)));
      e.b1 = Matrix(1, cfg.hidden);
      e.w2 = rng.normal_matrix(cfg.hidden, cfg.embed, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
      e.b2 = Matrix(1, cfg.embed);
    }
    p.weights.prompt_table = rng.normal_matrix(cfg.classes, cfg.embed, 1.0);
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.embed));
    for (auto& w : p.weights.implicit_proj) w = rng.normal_matrix(cfg.embed, cfg.embed, s);
    for (auto& w : p.weights.prompt_proj) w = rng.normal_matrix(cfg.embed, cfg.embed, s);
    p.weights.log_temperature = Matrix::scalar(std::log(1.0 / 0.07));
    return p;
  }

  /// Zero-filled parameters with the shapes implied by `cfg`.
  static EpAlignParams zeros(const EpAlignConfig& cfg) {
    EpAlignParams p{cfg, {}};
    for (Modality m : kAllModalities) {
      auto& e = p.weights.encoders[static_cast<std::size_t>(m)];
      e.w1 = Matrix(cfg.input_dim(m), cfg.hidden);
      e.b1 = Matrix(1, cfg.hidden);
      e.w2 = Matrix(cfg.hidden, cfg.embed);
      e.b2 = Matrix(1, cfg.embed);
    }
    p.weights.prompt_table = Matrix(cfg.classes, cfg.embed);
    for (auto& w : p.weights.implicit_proj) w = Matrix(cfg.embed, cfg.embed);
    for (auto& w : p.weights.prompt_proj) w = Matrix(cfg.embed, cfg.embed);
    p.weights.log_temperature = Matrix::scalar(0.0);
    return p;
  }
};

namespace align_detail {

template <class T>
T encoder_forward(const T& x, const EncoderWeights<T>& e) {
  return add_row(matmul(tanh(add_row(matmul(x, e.w1), e.b1)), e.w2), e.b2);
}

template <class T>
T logits_expr(const T& u_exp, const T& u_imp, const T& log_temperature) {
  return scale_by(matmul(l2_normalize_rows(u_exp), transpose(l2_normalize_rows(u_imp))),
                  exp(log_temperature));
}

/// Mean over rows of -log softmax(logits)[i][i] plus the same over logits^T.
template <class T>
T loss_expr(const T& logits) {
  std::vector<std::size_t> diag(logits.rows());
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  const T rows = mean(pick(log_softmax_rows(logits), diag));
  const T cols = mean(pick(log_softmax_rows(transpose(logits)), diag));
  return scale(add(rows, cols), -1.0);
}

/// Per-batch features, one K x D_mu block per modality (unused ones empty).
template <class T>
struct BatchFeatures {
  std::array<std::optional<T>, 3> x;
};

template <class T>
T implicit_batch(const EpAlignWeights<T>& w, const BatchFeatures<T>& batch, const ModalitySet& mods) {
  std::optional<T> acc;
  std::size_t n = 0;
  for (Modality m : kAllModalities) {
    if (!mods.contains(m)) continue;
    const auto k = static_cast<std::size_t>(m);
    require(batch.x[k].has_value(), ErrorKind::InvalidInput,
            std::string("missing features for modality ") + to_string(m));
    T u = matmul(encoder_forward(*batch.x[k], w.encoders[k]), w.implicit_proj[k]);
    acc = acc ? add(*acc, u) : u;
    ++n;
  }
  require(n > 0, ErrorKind::InvalidInput, "no modality provided");
  return n == 1 ? *acc : scale(*acc, 1.0 / static_cast<double>(n));
}

template <class T>
T explicit_batch(const EpAlignWeights<T>& w, const std::vector<std::size_t>& labels, Modality anchor) {
  return matmul(gather_rows(w.prompt_table, labels), w.prompt_proj[static_cast<std::size_t>(anchor)]);
}

template <class T>
T batch_loss(const EpAlignWeights<T>& w, const BatchFeatures<T>& batch,
             const std::vector<std::size_t>& labels, const ModalitySet& mods, Modality anchor) {
  return loss_expr(logits_expr(explicit_batch(w, labels, anchor), implicit_batch(w, batch, mods),
                               w.log_temperature));
}

}  // namespace align_detail

// ---------------------------------------------------------------------------
// Inference-side operations.

/// f^mu: encoder output for one feature vector.
inline Vector encode_modality(std::span<const double> x, Modality m, const EpAlignParams& p) {
  require(x.size() == p.config.input_dim(m), ErrorKind::Shape,
          std::string("encode_modality(") + to_string(m) + "): expected dim " +
              std::to_string(p.config.input_dim(m)) + ", got " + std::to_string(x.size()));
  return align_detail::encoder_forward(Matrix::row_vector(x),
                                       p.weights.encoders[static_cast<std::size_t>(m)])
      .storage();
}

/// u^mu = f^mu . W^{mu-pro}
inline Vector project_implicit(std::span<const double> f, Modality m, const EpAlignParams& p) {
  require(f.size() == p.config.embed, ErrorKind::Shape, "project_implicit: expected dim E");
  return matmul(Matrix::row_vector(f), p.weights.implicit_proj[static_cast<std::size_t>(m)]).storage();
}

/// u^prop = f^prop . W^{pro-anchor}, with f^prop the prompt-table row of `label`.
inline Vector project_prompt(std::size_t label, Modality anchor, const EpAlignParams& p) {
  require(label < p.config.classes, ErrorKind::InvalidLabel,
          "emotion class " + std::to_string(label) + " >= " + std::to_string(p.config.classes));
  const std::size_t idx[] = {label};
  return matmul(gather_rows(p.weights.prompt_table, idx),
                p.weights.prompt_proj[static_cast<std::size_t>(anchor)])
      .storage();
}

/// logits[i][j] = e^t * cos(U_exp[i], U_imp[j])
inline Matrix alignment_logits(const Matrix& u_exp, const Matrix& u_imp, double log_temperature) {
  require(u_exp.rows() >= 1, ErrorKind::InvalidInput, "alignment_logits: K must be >= 1");
  require_same_shape(u_exp, u_imp, "alignment_logits");
  return align_detail::logits_expr(u_exp, u_imp, Matrix::scalar(log_temperature));
}

/// Symmetric cross-entropy with matched pairs on the diagonal.
inline double alignment_loss(const Matrix& logits) {
  require(logits.rows() >= 1 && logits.rows() == logits.cols(), ErrorKind::Shape,
          "alignment_loss: logits must be K x K with K >= 1, got " + shape_str(logits));
  require_finite(logits, "alignment_loss");
  return align_detail::loss_expr(logits).item();
}

struct ModalityFeatures {
  std::optional<Vector> vision;
  std::optional<Vector> audio;
  std::optional<Vector> text;

  const std::optional<Vector>& get(Modality m) const {
    switch (m) {
      case Modality::Vision: return vision;
      case Modality::Audio: return audio;
      case Modality::Text: return text;
    }
    return text;
  }

  static ModalityFeatures from_sample(const MultimodalSample& s, const ModalitySet& mods) {
    ModalityFeatures f;
    if (mods.contains(Modality::Vision)) f.vision = s.vision;
    if (mods.contains(Modality::Audio)) f.audio = s.audio;
    if (mods.contains(Modality::Text)) f.text = s.text;
    return f;
  }
};

struct AlignmentResult {
  std::size_t predicted_class = 0;
  Vector u_emo;  // unit norm
  Vector per_class_similarity;
};

/// Unit-norm anchored prompt embedding of every class, C x E.
inline Matrix prompt_embeddings(const EpAlignParams& p) {
  return l2_normalize_rows(matmul(p.weights.prompt_table,
                                  p.weights.prompt_proj[static_cast<std::size_t>(p.config.anchor)]));
}

/// Mean of the unit-normalized per-modality embeddings, re-normalized.
inline Vector fused_implicit(const ModalityFeatures& feats, const EpAlignParams& p) {
  Vector acc(p.config.embed, 0.0);
  std::size_t n = 0;
  for (Modality m : kAllModalities) {
    const auto& x = feats.get(m);
    if (!x) continue;
    const Vector u = l2_normalize(project_implicit(encode_modality(*x, m, p), m, p));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += u[i];
    ++n;
  }
  require(n > 0, ErrorKind::InvalidInput, "align_infer: no modality provided");
  return l2_normalize(acc);
}

/// Scores a unit implicit embedding against every prompt and keeps the best.
inline AlignmentResult align_from_embedding(std::span<const double> implicit, const EpAlignParams& p) {
  const Matrix prompts = prompt_embeddings(p);
  AlignmentResult r;
  r.per_class_similarity.resize(p.config.classes);
  for (std::size_t c = 0; c < p.config.classes; ++c) {
    r.per_class_similarity[c] = cosine_similarity(prompts.row(c), implicit);
    if (r.per_class_similarity[c] > r.per_class_similarity[r.predicted_class]) r.predicted_class = c;
  }
  const auto best = prompts.row(r.predicted_class);
  r.u_emo.assign(best.begin(), best.end());
  return r;
}

inline AlignmentResult align_infer(const ModalityFeatures& feats, const EpAlignParams& p) {
  return align_from_embedding(fused_implicit(feats, p), p);
}

/// The aligned embedding for a bare emotion prompt (no implicit evidence):
/// the unit anchored prompt row itself, reported with its class scores.
inline AlignmentResult align_prompt(std::size_t label, const EpAlignParams& p) {
  return align_from_embedding(l2_normalize(project_prompt(label, p.config.anchor, p)), p);
}

// ---------------------------------------------------------------------------
// Training.

enum class BatchSampling {
  Shuffled,       // plain epoch shuffle
  ClassDistinct,  // no repeated label inside a batch (requires K <= C)
};

struct TrainAlignConfig {
  std::size_t batch = 16;
  std::size_t epochs = 50;
  double lr = 1e-3;
  BatchSampling sampling = BatchSampling::Shuffled;
};

struct TrainAlignResult {
  EpAlignParams params;
  std::vector<double> loss_curve;  // mean batch loss per epoch
};

namespace align_detail {

inline std::vector<std::vector<std::size_t>> epoch_batches(std::span<const MultimodalSample> data,
                                                           std::size_t k, std::size_t classes,
                                                           BatchSampling sampling, Rng& rng) {
  const std::size_t n_batches = data.size() / k;
  std::vector<std::vector<std::size_t>> batches;
  if (sampling == BatchSampling::Shuffled) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < n_batches; ++b)
      batches.emplace_back(order.begin() + b * k, order.begin() + (b + 1) * k);
    return batches;
  }
  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t i = 0; i < data.size(); ++i) pools[data[i].label].push_back(i);
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!pools[c].empty()) present.push_back(c);
    rng.shuffle(pools[c].begin(), pools[c].end());
  }
  require(k <= present.size(), ErrorKind::Config,
          "class-distinct batches need batch size <= number of classes present");
  std::vector<std::size_t> cursor(classes, 0);
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<std::size_t> cls = present;
    rng.shuffle(cls.begin(), cls.end());
    std::vector<std::size_t> batch;
    for (std::size_t j = 0; j < k; ++j) {
      auto& pool = pools[cls[j]];
      if (cursor[cls[j]] == pool.size()) {
        rng.shuffle(pool.begin(), pool.end());
        cursor[cls[j]] = 0;
      }
      batch.push_back(pool[cursor[cls[j]]++]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

inline Matrix stack_features(std::span<const MultimodalSample> data, const std::vector<std::size_t>& idx,
                             Modality m, std::size_t dim) {
  Matrix x(idx.size(), dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Vector& f = data[idx[i]].features(m);
    require(f.size() == dim, ErrorKind::Shape,
            std::string("sample feature dim mismatch for ") + to_string(m));
    std::copy(f.begin(), f.end(), x.row(i).begin());
  }
  return x;
}

}  // namespace align_detail

/// Loss of one batch as a function of the flattened parameter list, for
/// gradient checking.
inline ad::LossFn alignment_batch_loss_fn(std::span<const MultimodalSample> data,
                                          std::vector<std::size_t> idx, const EpAlignConfig& cfg) {
  std::vector<MultimodalSample> rows;
  std::vector<std::size_t> labels;
  for (std::size_t i : idx) {
    rows.push_back(data[i]);
    labels.push_back(data[i].label);
  }
  return [rows, labels, cfg](ad::Tape& tape, std::span<const ad::Var> vars) {
    const auto w = bind_vars<EpAlignWeights>(vars);
    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    align_detail::BatchFeatures<ad::Var> batch;
    for (Modality m : kAllModalities)
      if (cfg.modalities.contains(m))
        batch.x[static_cast<std::size_t>(m)] =
            tape.constant(align_detail::stack_features(rows, all, m, cfg.input_dim(m)));
    return align_detail::batch_loss(w, batch, labels, cfg.modalities, cfg.anchor);
  };
}

inline TrainAlignResult train_epalign(std::span<const MultimodalSample> data, const EpAlignConfig& cfg,
                                      const TrainAlignConfig& tc) {
  require(!data.empty(), ErrorKind::Config, "train_epalign: empty dataset");
  require(tc.batch >= 1, ErrorKind::Config, "train_epalign: batch size must be >= 1");
  require(tc.batch <= data.size(), ErrorKind::Config,
          "train_epalign: batch size " + std::to_string(tc.batch) + " > dataset size " +
              std::to_string(data.size()));
  require(!cfg.modalities.empty(), ErrorKind::Config, "train_epalign: no modalities selected");
  for (const auto& s : data)
    require(s.label < cfg.classes, ErrorKind::InvalidLabel,
            "sample label " + std::to_string(s.label) + " >= classes");

  TrainAlignResult out{EpAlignParams::init(cfg), {}};
  Rng rng = Rng::stream(cfg.seed, "ep-align.batches");
  AdamState adam;
  const AdamConfig acfg{.lr = tc.lr};

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto batches = align_detail::epoch_batches(data, tc.batch, cfg.classes, tc.sampling, rng);
    double total = 0.0;
    for (const auto& idx : batches) {
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(data[i].label);
      std::array<std::optional<Matrix>, 3> feats;
      for (Modality m : kAllModalities)
        if (cfg.modalities.contains(m))
          feats[static_cast<std::size_t>(m)] = align_detail::stack_features(data, idx, m, cfg.input_dim(m));

      total += optimize_step<EpAlignWeights>(
          out.params.weights,
          [&](ad::Tape& tape, const EpAlignWeights<ad::Var>& w) {
            align_detail::BatchFeatures<ad::Var> batch;
            for (std::size_t k = 0; k < 3; ++k)
              if (feats[k]) batch.x[k] = tape.constant(*feats[k]);
            return align_detail::batch_loss(w, batch, labels, cfg.modalities, cfg.anchor);
          },
          adam, acfg);
      auto& t = out.params.weights.log_temperature[0];
      t = std::min(t, kMaxLogTemperature);
    }
    out.loss_curve.push_back(total / static_cast<double>(batches.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct ClassificationReport {
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// Per-class precision/recall/F1 with 0 wherever a denominator is 0.
inline ClassificationReport classification_report(std::span<const std::size_t> truth,
                                                  std::span<const std::size_t> predicted,
                                                  std::size_t classes) {
  require(truth.size() == predicted.size(), ErrorKind::Shape, "classification_report: length mismatch");
  require(!truth.empty(), ErrorKind::InvalidInput, "classification_report: empty dataset");
  ClassificationReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] < classes && predicted[i] < classes, ErrorKind::InvalidLabel,
            "classification_report: label out of range");
    ++r.confusion[truth[i]][predicted[i]];
    correct += truth[i] == predicted[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t tp = r.confusion[c][c], row = 0, col = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      row += r.confusion[c][k];
      col += r.confusion[k][c];
    }
    const double p = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double rc = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0);
  }
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / static_cast<double>(classes);
  return r;
}

inline ClassificationReport eval_alignment(const EpAlignParams& p, std::span<const MultimodalSample> data,
                                           const ModalitySet& mods) {
  require(!data.empty(), ErrorKind::InvalidInput, "eval_alignment: empty dataset");
  std::vector<std::size_t> truth, pred;
  for (const auto& s : data) {
    truth.push_back(s.label);
    pred.push_back(align_infer(ModalityFeatures::from_sample(s, mods), p).predicted_class);
  }
  return classification_report(truth, pred, p.config.classes);
}

}  // namespace emoforge
