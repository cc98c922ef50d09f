#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace emoforge;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "emoforge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

double printed_value(const std::string& text, const std::string& label) {
  std::smatch m;
  REQUIRE(std::regex_search(text, m, std::regex(label + " ([0-9.]+)")));
  return std::stod(m[1]);
}

/// One small corpus, aligner and TTS model shared by the workflow tests.
struct Workspace {
  testing::TempDir dir{"cli"};
  std::string data = (dir / "data").string();
  std::string align = (dir / "align.json").string();
  std::string tts = (dir / "tts.json").string();

  Workspace() {
    REQUIRE(run({"gen-data", "--out", data, "--per-class", "40"}).code == 0);
    REQUIRE(run({"train-align", "--data", data, "--out", align, "--epochs", "30"}).code == 0);
    const Run t = run({"train-tts", "--data", data, "--align-ckpt", align, "--out", tts, "--steps", "20"});
    INFO(t.err);
    REQUIRE(t.code == 0);
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit 1 with usage text on stderr") {
  const Run unknown = run({"mos", "--scores", "x", "--bogus"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(unknown.out.empty());

  CHECK(run({}).code == 1);
  CHECK(run({"fly"}).code == 1);
  CHECK(run({"gen-data"}).code == 1);  // --out is required
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("the binary reports usage errors through its exit status") {
  const std::string cmd = std::string(EMOFORGE_CLI_PATH) + " mos --bogus > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);
}

TEST_CASE("mos subcommand") {
  testing::TempDir dir("cli_mos");
  std::string ten_lines;
  for (int i = 0; i < 10; ++i) ten_lines += "4.0\n";
  write_text_file(dir / "ten.txt", ten_lines);
  const Run ten = run({"mos", "--scores", (dir / "ten.txt").string()});
  CHECK(ten.code == 0);
  CHECK(ten.out == "4.00(±0.00)\n");

  write_text_file(dir / "pair.txt", "4\n\n5\n");
  CHECK(run({"mos", "--scores", (dir / "pair.txt").string()}).out == "4.50(±6.35)\n");

  write_text_file(dir / "bad.txt", "4\nfour\n");
  const Run bad = run({"mos", "--scores", (dir / "bad.txt").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("bad.txt:2") != std::string::npos);

  write_text_file(dir / "grid.txt", "4.2\n4\n");
  CHECK(run({"mos", "--scores", (dir / "grid.txt").string()}).code == 2);
  write_text_file(dir / "one.txt", "4\n");
  CHECK(run({"mos", "--scores", (dir / "one.txt").string()}).code == 2);
  const Run missing = run({"mos", "--scores", (dir / "nope.txt").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("nope.txt") != std::string::npos);
}

TEST_CASE("gen-data, train-align and eval-align on defaults reach the accuracy target") {
  testing::TempDir dir("cli_align");
  const std::string data = (dir / "data").string(), ckpt = (dir / "a.json").string();
  const Run g = run({"gen-data", "--out", data});
  REQUIRE(g.code == 0);
  CHECK(g.out.find("1000 utterances") != std::string::npos);
  REQUIRE(run({"train-align", "--data", data, "--out", ckpt}).code == 0);

  const Run e = run({"eval-align", "--ckpt", ckpt, "--data", data});
  REQUIRE(e.code == 0);
  CHECK(printed_value(e.out, "macro F1") >= 0.95);
  CHECK(e.out.find("confusion") != std::string::npos);
  const auto report = nlohmann::json::parse(read_text_file(ckpt + ".eval.json"));
  CHECK(report["macro_f1"].get<double>() == Catch::Approx(printed_value(e.out, "macro F1")).margin(5e-5));
  CHECK(report["confusion"].size() == 5);

  const std::string single = (dir / "audio.json").string();
  const Run one = run({"eval-align", "--ckpt", ckpt, "--data", data, "--modalities", "audio", "--out", single});
  REQUIRE(one.code == 0);
  CHECK(nlohmann::json::parse(read_text_file(single))["accuracy"].get<double>() > 0.5);
}

TEST_CASE("fixed seeds give byte-identical artifacts") {
  testing::TempDir dir("cli_det");
  auto path = [&](const std::string& name) { return (dir / name).string(); };
  for (const char* d : {"d1", "d2"}) REQUIRE(run({"gen-data", "--out", path(d), "--per-class", "6", "--seed", "9"}).code == 0);
  CHECK(read_text_file(path("d1") + "/manifest.jsonl") == read_text_file(path("d2") + "/manifest.jsonl"));
  CHECK(read_text_file(path("d1") + "/wavs/utt_00003.wav") == read_text_file(path("d2") + "/wavs/utt_00003.wav"));

  for (const char* a : {"a1.json", "a2.json"})
    REQUIRE(run({"train-align", "--data", path("d1"), "--out", path(a), "--epochs", "3", "--seed", "5"}).code == 0);
  CHECK(read_text_file(path("a1.json")) == read_text_file(path("a2.json")));
  REQUIRE(run({"train-align", "--data", path("d1"), "--out", path("a3.json"), "--epochs", "3", "--seed", "6"}).code == 0);
  CHECK(read_text_file(path("a1.json")) != read_text_file(path("a3.json")));
}

TEST_CASE("EMOFORGE_SEED is the seed fallback") {
  testing::TempDir dir("cli_env");
  REQUIRE(run({"gen-data", "--out", (dir / "flag").string(), "--per-class", "3", "--seed", "77"}).code == 0);
  ::setenv("EMOFORGE_SEED", "77", 1);
  const Run env = run({"gen-data", "--out", (dir / "env").string(), "--per-class", "3"});
  ::unsetenv("EMOFORGE_SEED");
  REQUIRE(env.code == 0);
  REQUIRE(run({"gen-data", "--out", (dir / "plain").string(), "--per-class", "3"}).code == 0);
  const std::string flag = read_text_file(dir / "flag/manifest.jsonl");
  CHECK(read_text_file(dir / "env/manifest.jsonl") == flag);
  CHECK(read_text_file(dir / "plain/manifest.jsonl") != flag);
}

TEST_CASE("synth by emotion name and by reference features") {
  Workspace& w = workspace();
  const std::string wav = (w.dir / "s.wav").string(), mel = (w.dir / "s.mel").string();
  const Run s = run({"synth", "--ckpt", w.tts, "--align-ckpt", w.align, "--text", "pack my box", "--emotion", "happy",
                     "--speaker", "1", "--out", wav, "--mel-out", mel, "--iters", "4"});
  INFO(s.err);
  REQUIRE(s.code == 0);
  CHECK(s.out.find("emotion happy") != std::string::npos);
  const Waveform out = wav_read(wav);
  const Matrix frames = decode_mel_dump(read_file_bytes(mel));
  CHECK(frames.cols() == 40);
  CHECK(std::abs(static_cast<double>(out.size()) - static_cast<double>(frames.rows() * 128)) <= 512.0);

  const std::string wav2 = (w.dir / "s2.wav").string();
  REQUIRE(run({"synth", "--ckpt", w.tts, "--align-ckpt", w.align, "--text", "pack my box", "--emotion", "1",
               "--speaker", "1", "--out", wav2, "--iters", "4"})
              .code == 0);
  CHECK(read_file_bytes(wav) == read_file_bytes(wav2));

  // features of a held-out "sad" utterance route through align_infer
  const Corpus c = load_corpus(w.data);
  const Split split = split_holdout(c);
  const Utterance* sad = nullptr;
  for (const auto& u : split.test)
    if (u.emotion == 2) sad = &u;
  REQUIRE(sad != nullptr);
  write_text_file(w.dir / "ref.json",
                  nlohmann::json{{"vis", sad->feat_vis}, {"audio", sad->feat_audio}, {"tex", sad->feat_text}}.dump());
  const Run r = run({"synth", "--ckpt", w.tts, "--align-ckpt", w.align, "--text", "vex bold jim.", "--ref-features",
                     (w.dir / "ref.json").string(), "--out", (w.dir / "r.wav").string(), "--iters", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("emotion sad") != std::string::npos);
}

TEST_CASE("synth and train-tts input errors") {
  Workspace& w = workspace();
  const std::string out = (w.dir / "x.wav").string();
  const std::vector<std::string> base{"synth", "--ckpt", w.tts, "--align-ckpt", w.align, "--text", "hi", "--out", out};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  CHECK(with({}).code == 1);
  CHECK(with({"--emotion", "bored"}).code == 1);
  CHECK(with({"--emotion", "happy", "--ref-features", "f.json"}).code == 1);
  CHECK(with({"--emotion", "happy", "--speaker", "9"}).code == 2);
  write_text_file(w.dir / "empty.json", "{}");
  CHECK(with({"--ref-features", (w.dir / "empty.json").string()}).code == 2);

  const Run bad_ckpt = run({"synth", "--ckpt", w.align, "--align-ckpt", w.align, "--text", "hi", "--emotion", "sad",
                            "--out", out});
  CHECK(bad_ckpt.code == 2);
  CHECK(bad_ckpt.err.find("EMITTS/1") != std::string::npos);

  const Run variant = run({"train-tts", "--data", w.data, "--align-ckpt", w.align, "--out", (w.dir / "t.json").string(),
                           "--variant", "wavenet", "--steps", "1"});
  CHECK(variant.code == 1);
  CHECK(variant.err.find("wavenet") != std::string::npos);
  CHECK(run({"train-align", "--data", (w.dir / "nowhere").string(), "--out", (w.dir / "a.json").string()}).code == 2);
}

TEST_CASE("eval writes the report schema and is idempotent") {
  Workspace& w = workspace();
  testing::TempDir syn("cli_syn");
  const Corpus c = load_corpus(w.data);
  std::string pairs;
  for (std::size_t i = 0; i < 3; ++i) {
    const Utterance& u = c.utterances[i * 7];
    const std::string name = u.id + ".wav";
    REQUIRE(run({"synth", "--ckpt", w.tts, "--align-ckpt", w.align, "--text", u.text, "--emotion",
                 std::to_string(u.emotion), "--speaker", std::to_string(u.speaker), "--out", (syn / name).string(),
                 "--iters", "4"})
                .code == 0);
    nlohmann::json line = {{"id", u.id}, {"ref", u.wav}, {"syn", name}};
    if (i != 1) line["ref_text"] = u.text, line["hyp_text"] = i == 0 ? u.text : "pack my";
    pairs += line.dump() + "\n";
  }
  write_text_file(syn / "pairs.jsonl", pairs);
  write_text_file(syn / "mos.txt", "4\n4.5\n3.5\n");
  const std::vector<std::string> args{"eval",  "--ref-dir", w.data, "--syn-dir", syn.path().string(),
                                      "--pairs", (syn / "pairs.jsonl").string(), "--out", (syn / "r1.json").string(),
                                      "--csv", (syn / "r1.csv").string(), "--mos-scores", (syn / "mos.txt").string()};
  const Run e = run(args);
  INFO(e.err);
  REQUIRE(e.code == 0);
  const auto j = nlohmann::json::parse(read_text_file(syn / "r1.json"));
  for (const char* key : {"wer", "cer", "mcd_median", "secs_median", "mos", "n_utts", "utterances"})
    CHECK(j.contains(key));
  CHECK(j["n_utts"] == 3);
  CHECK(j["mcd_median"].get<double>() >= 0.0);
  CHECK(j["secs_median"].get<double>() <= 1.0);
  CHECK(j["mos"]["n"] == 3);
  CHECK(j["utterances"][1]["wer"].is_null());
  CHECK(j["wer"].get<double>() > 0.0);

  auto again = args;
  again[8] = (syn / "r2.json").string();
  again[10] = (syn / "r2.csv").string();
  REQUIRE(run(again).code == 0);
  CHECK(read_text_file(syn / "r1.json") == read_text_file(syn / "r2.json"));
  CHECK(read_text_file(syn / "r1.csv") == read_text_file(syn / "r2.csv"));

  write_text_file(syn / "broken.jsonl", pairs + "{\"id\": 1}\n");
  auto broken = args;
  broken[6] = (syn / "broken.jsonl").string();
  const Run b = run(broken);
  CHECK(b.code == 2);
  CHECK(b.err.find("broken.jsonl:4") != std::string::npos);
}
