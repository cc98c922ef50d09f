#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace emoforge;
using testing::error_kind;

namespace {

Matrix random_emotion_table(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  return l2_normalize_rows(rng.normal_matrix(classes, dim, 1.0));
}

std::vector<TtsExample> small_examples(std::size_t n) {
  CorpusConfig cfg;
  cfg.per_class = 2;
  const Corpus c = make_corpus(cfg);
  std::vector<TtsExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Utterance& u = c.utterances[i];
    out.push_back(make_example(u.text, u.emotion, u.speaker, u.durations, render_reference(u.text, u.emotion, u.speaker)));
  }
  return out;
}

double mean_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("variant names") {
  CHECK(parse_mechanism("vits") == CondMechanism::CouplingFlow);
  CHECK(parse_mechanism("fastspeech") == CondMechanism::CrossAttention);
  CHECK(parse_mechanism("tacotron") == CondMechanism::Concat);
  for (auto m : {CondMechanism::CouplingFlow, CondMechanism::CrossAttention, CondMechanism::Concat})
    CHECK(parse_mechanism(to_string(m)) == m);
  CHECK(error_kind([] { parse_mechanism("wavenet"); }) == ErrorKind::Config);
}

TEST_CASE("text_encode examples") {
  const TtsParams p = TtsParams::init({});
  const Matrix a = text_encode("a", p);
  CHECK(a.rows() == 1);
  CHECK(a.cols() == 32);
  CHECK(text_encode("ab", p) != text_encode("ba", p));
  CHECK(text_encode("the fox.", p) == text_encode("the fox.", p));
  CHECK(text_encode("The Fox!.", p) == text_encode("the fox.", p));
  CHECK(text_encode("pack my box", p).rows() == 11);
  CHECK(error_kind([&] { text_encode("", p); }) == ErrorKind::InvalidInput);
  CHECK(error_kind([&] { text_encode("123?!", p); }) == ErrorKind::InvalidInput);
}

TEST_CASE("duration head examples") {
  TtsParams p = TtsParams::init({});
  const Matrix h = condition_features(text_encode("quick zephyrs", p), Vector(32, 0.1), speaker_vector(1, p), p);

  p.weights.dur_w = Matrix(p.weights.dur_w.rows(), 1);
  p.weights.dur_b = Matrix(1, 1);
  for (double r : raw_durations(h, p)) CHECK(r == Catch::Approx(std::log(2.0)).epsilon(1e-15));
  for (std::size_t d : predict_durations(h, p)) CHECK(d == 1);

  p.weights.dur_b = Matrix::scalar(1e6);
  for (std::size_t d : predict_durations(h, p)) CHECK(d == kMaxDuration);

  CHECK(round_durations(std::vector<double>{0.2, 1.49, 1.5, 7.2, 25.0, NAN}) ==
        std::vector<std::size_t>{1, 1, 2, 7, 20, 20});
  CHECK(error_kind([&] { raw_durations(Matrix(3, 5), p); }) == ErrorKind::Shape);
}

TEST_CASE("expanded frame count equals the summed durations") {
  const TtsParams p = TtsParams::init({});
  const Matrix h = condition_features(text_encode("vex bold jim.", p), Vector(32, 0.0), speaker_vector(0, p), p);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> d(h.rows());
    for (auto& x : d) x = 1 + rng.index(kMaxDuration);
    const Matrix mel = decode_mel(h, d, p);
    CHECK(mel.rows() == std::accumulate(d.begin(), d.end(), std::size_t{0}));
    CHECK(mel.cols() == 40);
  }
  CHECK(error_kind([&] { decode_mel(h, std::vector<std::size_t>{1, 2}, p); }) == ErrorKind::Shape);
}

TEST_CASE("condition feature widths per variant") {
  for (auto m : {CondMechanism::CouplingFlow, CondMechanism::CrossAttention, CondMechanism::Concat}) {
    TtsConfig cfg;
    cfg.variant = m;
    const TtsParams p = TtsParams::init(cfg);
    const Matrix h = condition_features(text_encode("jump", p), Vector(32, 0.2), speaker_vector(2, p), p);
    CHECK(h.rows() == 4);
    CHECK(h.cols() == (m == CondMechanism::Concat ? 32u + 32u + 8u : 32u));
    CHECK(error_kind([&] { condition_features(text_encode("jump", p), Vector(31, 0.2), speaker_vector(2, p), p); }) ==
          ErrorKind::Shape);
  }
  CHECK(error_kind([] { speaker_vector(4, TtsParams::init({})); }) == ErrorKind::InvalidInput);
}

TEST_CASE("zeroed conditioning makes attention and coupling variants identical") {
  TtsConfig att_cfg, flow_cfg;
  att_cfg.variant = CondMechanism::CrossAttention;
  flow_cfg.variant = CondMechanism::CouplingFlow;
  TtsParams att = TtsParams::init(att_cfg), flow = TtsParams::init(flow_cfg);
  att.weights.attention.w_v = Matrix(32, 32);
  flow.weights.coupling.w_out = Matrix(16, 32);
  flow.weights.coupling.b_out = Matrix(1, 32);

  const Vector u_emo = random_emotion_table(1, 32, 3).storage();
  for (const std::string text : {"the quick brown fox", "judge my vow."}) {
    const Matrix ha = condition_features(text_encode(text, att), u_emo, speaker_vector(1, att), att);
    const Matrix hf = condition_features(text_encode(text, flow), u_emo, speaker_vector(1, flow), flow);
    CHECK(ha == hf);
    const auto d = predict_durations(ha, att);
    CHECK(decode_mel(ha, d, att) == decode_mel(hf, d, flow));
  }
}

TEST_CASE("synthesize is deterministic and honours the vocoder length contract") {
  const TtsParams p = TtsParams::init({});
  const Vector u_emo = random_emotion_table(1, 32, 9).storage();
  const SynthResult a = synthesize("bright vixens jump", u_emo, 2, p, 8);
  const SynthResult b = synthesize("bright vixens jump", u_emo, 2, p, 8);
  CHECK(a.waveform == b.waveform);
  CHECK(a.mel.frames == b.mel.frames);
  const std::size_t frames = std::accumulate(a.durations.begin(), a.durations.end(), std::size_t{0});
  CHECK(a.mel.frames.rows() == frames);
  CHECK(std::abs(static_cast<double>(a.waveform.size()) - static_cast<double>(frames * 128)) <= 512.0);
  CHECK(a.waveform.sample_rate == 16000);
}

TEST_CASE("make_example validates teacher durations") {
  const Waveform ref = render_reference("pack my box", 0, 0);
  const auto d = char_durations("pack my box");
  CHECK(make_example("pack my box", 0, 0, d, ref).mel.cols() == 40);
  CHECK(error_kind([&] { make_example("pack my box", 0, 0, std::vector<std::size_t>(3, 4), ref); }) ==
        ErrorKind::InvalidInput);
  auto zero = d;
  zero[2] = 0;
  CHECK(error_kind([&] { make_example("pack my box", 0, 0, zero, ref); }) == ErrorKind::InvalidInput);
  auto long_d = d;
  long_d[0] = 200;
  CHECK(error_kind([&] { make_example("pack my box", 0, 0, long_d, ref); }) == ErrorKind::InvalidInput);
}

TEST_CASE("train_tts config errors") {
  const auto data = small_examples(4);
  const Matrix table = random_emotion_table(5, 32, 1);
  TrainTtsConfig tc;
  tc.steps = 1;
  tc.batch = 0;
  CHECK(error_kind([&] { train_tts(data, table, {}, tc); }) == ErrorKind::Config);
  tc.batch = 5;
  CHECK(error_kind([&] { train_tts(data, table, {}, tc); }) == ErrorKind::Config);
  tc.batch = 2;
  tc.lr = -1.0;
  CHECK(error_kind([&] { train_tts(data, table, {}, tc); }) == ErrorKind::Config);
  tc.lr = 1e-3;
  CHECK(error_kind([&] { train_tts({}, table, {}, tc); }) == ErrorKind::Config);
  CHECK(error_kind([&] { train_tts(data, random_emotion_table(1, 32, 1), {}, tc); }) == ErrorKind::InvalidLabel);
  CHECK(error_kind([&] { train_tts(data, random_emotion_table(5, 16, 1), {}, tc); }) == ErrorKind::Shape);
}

TEST_CASE("zero learning rate gives a flat loss curve") {
  const auto data = small_examples(6);
  const Matrix table = random_emotion_table(5, 32, 2);
  for (auto m : {CondMechanism::CouplingFlow, CondMechanism::CrossAttention, CondMechanism::Concat}) {
    TtsConfig cfg;
    cfg.variant = m;
    TrainTtsConfig tc;
    tc.steps = 6;
    tc.batch = 2;
    tc.lr = 0.0;
    tc.eval_every = 2;
    const TrainTtsResult r = train_tts(data, table, cfg, tc);
    REQUIRE(r.loss_curve.size() == 4);
    for (double l : r.loss_curve) CHECK(l == r.loss_curve.front());
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = small_examples(6);
  const Matrix table = random_emotion_table(5, 32, 2);
  TrainTtsConfig tc;
  tc.steps = 8;
  tc.batch = 3;
  tc.eval_every = 4;
  const TrainTtsResult a = train_tts(data, table, {}, tc), b = train_tts(data, table, {}, tc);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.step_losses == b.step_losses);
  TtsConfig other;
  other.seed = 43;
  CHECK(train_tts(data, table, other, tc).step_losses != a.step_losses);
}

TEST_CASE("default toy training halves the loss and keeps emotions apart") {
  const Corpus corpus = make_corpus({});
  const Split split = split_holdout(corpus);
  const EpAlignParams align = train_epalign(samples_of(split.train), EpAlignConfig{}, {}).params;
  const Matrix table = prompt_embeddings(align);
  std::vector<TtsExample> data;
  for (const auto& u : split.train)
    data.push_back(make_example(u.text, u.emotion, u.speaker, u.durations, render_reference(u.text, u.emotion, u.speaker)));

  const TrainTtsResult r = train_tts(data, table, {}, {});
  INFO("initial " << r.loss_curve.front() << " final " << r.loss_curve.back());
  CHECK(r.loss_curve.back() < 0.5 * r.loss_curve.front());
  CHECK(r.step_losses.size() == 2000);

  const Matrix h = text_encode("the quick brown fox", r.params);
  const Vector happy(table.row(1).begin(), table.row(1).end()), sad(table.row(2).begin(), table.row(2).end());
  const Matrix hh = condition_features(h, happy, speaker_vector(0, r.params), r.params);
  const Matrix hs = condition_features(h, sad, speaker_vector(0, r.params), r.params);
  const auto d = char_durations("the quick brown fox");
  CHECK(mean_abs_diff(decode_mel(hh, d, r.params), decode_mel(hs, d, r.params)) > 1e-6);
}
