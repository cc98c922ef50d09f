#pragma once

// emoforge command line. Exit codes: 0 ok, 1 usage/config, 2 data/format/io.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "emoforge/emoforge.hpp"

namespace emoforge::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

inline std::size_t emotion_index(const std::string& name, std::size_t classes) {
  const auto& names = default_emotion_names();
  for (std::size_t i = 0; i < names.size() && i < classes; ++i)
    if (names[i] == name) return i;
  try {
    std::size_t pos = 0;
    const auto v = std::stoul(name, &pos);
    if (pos == name.size() && v < classes) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "--emotion: unknown emotion '" + name + "'");
}

inline std::string emotion_name(std::size_t i) {
  const auto& names = default_emotion_names();
  return i < names.size() ? names[i] : "class" + std::to_string(i);
}

inline std::vector<double> read_scores(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(line, &pos));
      require(line.find_first_not_of(" \t\r", pos) == std::string::npos, ErrorKind::Format, "trailing text");
    } catch (const std::exception&) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": not a number: '" + line + "'");
    }
  }
  return out;
}

inline ModalityFeatures read_ref_features(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  require(j.is_object(), ErrorKind::Format, path.string() + ": expected a JSON object");
  ModalityFeatures f;
  try {
    if (j.contains("vis")) f.vision = j.at("vis").get<Vector>();
    if (j.contains("audio")) f.audio = j.at("audio").get<Vector>();
    if (j.contains("tex")) f.text = j.at("tex").get<Vector>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  require(f.vision || f.audio || f.text, ErrorKind::Format,
          path.string() + ": needs at least one of \"vis\", \"audio\", \"tex\"");
  return f;
}

inline std::vector<TtsExample> load_tts_examples(const fs::path& dir, std::span<const Utterance> utts,
                                                 std::size_t n_mels) {
  MelConfig mc;
  mc.n_mels = n_mels;
  std::vector<TtsExample> out;
  out.reserve(utts.size());
  for (const auto& u : utts)
    out.push_back(make_example(u.text, u.emotion, u.speaker, u.durations, wav_read(dir / u.wav), mc));
  return out;
}

inline nlohmann::json report_json(const ClassificationReport& r) {
  return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"precision", r.precision},
          {"recall", r.recall},     {"f1", r.f1},             {"confusion", r.confusion}};
}

/// Runs one command line. Everything printed goes to `out` / `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"emoforge: emotion-prompt alignment, emotional TTS and speech metrics", "emoforge"};
  app.require_subcommand(1);
  std::uint64_t seed = 42;
  app.add_option("--seed", seed, "random seed")->envname("EMOFORGE_SEED");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multimodal corpus");
  std::string gen_out;
  CorpusConfig cc;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--classes", cc.classes, "emotion classes")->capture_default_str();
  gen->add_option("--speakers", cc.speakers, "speakers")->capture_default_str();
  gen->add_option("--per-class", cc.per_class, "utterances per class")->capture_default_str();
  gen->add_option("--sep", cc.separation, "cluster separation")->capture_default_str();
  gen->add_option("--noise", cc.noise, "feature noise std")->capture_default_str();
  gen->add_option("--dim", cc.dim_vision, "feature dimension of every modality")->capture_default_str();
  gen->add_option("--seed", seed, "random seed")->envname("EMOFORGE_SEED");

  // train-align
  auto* ta = app.add_subcommand("train-align", "train EP-Align on a corpus");
  std::string ta_data, ta_out, ta_mods = "vis,audio,tex", ta_anchor = "tex";
  TrainAlignConfig tac;
  EpAlignConfig eac;
  ta->add_option("--data", ta_data, "corpus directory")->required();
  ta->add_option("--out", ta_out, "checkpoint path")->required();
  ta->add_option("--modalities", ta_mods, "comma-separated subset of vis,audio,tex")->capture_default_str();
  ta->add_option("--anchor", ta_anchor, "prompt anchor modality")->capture_default_str();
  ta->add_option("--epochs", tac.epochs, "epochs")->capture_default_str();
  ta->add_option("--batch", tac.batch, "batch size K")->capture_default_str();
  ta->add_option("--lr", tac.lr, "Adam learning rate")->capture_default_str();
  ta->add_option("--hidden", eac.hidden, "encoder hidden width")->capture_default_str();
  ta->add_option("--embed", eac.embed, "embedding width E")->capture_default_str();
  ta->add_option("--seed", seed, "random seed")->envname("EMOFORGE_SEED");

  // eval-align
  auto* ea = app.add_subcommand("eval-align", "evaluate EP-Align on the held-out split");
  std::string ea_ckpt, ea_data, ea_mods, ea_out;
  ea->add_option("--ckpt", ea_ckpt, "EP-Align checkpoint")->required();
  ea->add_option("--data", ea_data, "corpus directory")->required();
  ea->add_option("--modalities", ea_mods, "modalities used at inference (default: the checkpoint's)");
  ea->add_option("--out", ea_out, "report JSON (default: CKPT.eval.json)");

  // train-tts
  auto* tt = app.add_subcommand("train-tts", "train the toy TTS model");
  std::string tt_data, tt_variant = "vits", tt_align, tt_out;
  TrainTtsConfig ttc;
  tt->add_option("--data", tt_data, "corpus directory")->required();
  tt->add_option("--variant", tt_variant, "vits | fastspeech | tacotron")->capture_default_str();
  tt->add_option("--align-ckpt", tt_align, "EP-Align checkpoint supplying u_emo")->required();
  tt->add_option("--out", tt_out, "checkpoint path")->required();
  tt->add_option("--steps", ttc.steps, "optimizer steps")->capture_default_str();
  tt->add_option("--batch", ttc.batch, "utterances per step")->capture_default_str();
  tt->add_option("--lr", ttc.lr, "Adam learning rate")->capture_default_str();
  tt->add_option("--seed", seed, "random seed")->envname("EMOFORGE_SEED");

  // synth
  auto* sy = app.add_subcommand("synth", "synthesize one utterance");
  std::string sy_ckpt, sy_align, sy_text, sy_emotion, sy_ref, sy_out, sy_mel;
  std::size_t sy_speaker = 0, sy_iters = kGriffinLimIters;
  sy->add_option("--ckpt", sy_ckpt, "TTS checkpoint")->required();
  sy->add_option("--align-ckpt", sy_align, "EP-Align checkpoint")->required();
  sy->add_option("--text", sy_text, "text to speak")->required();
  auto* emo_opt = sy->add_option("--emotion", sy_emotion, "emotion name or class id");
  auto* ref_opt = sy->add_option("--ref-features", sy_ref, "JSON file with vis/audio/tex feature arrays");
  emo_opt->excludes(ref_opt);
  sy->add_option("--speaker", sy_speaker, "speaker id")->capture_default_str();
  sy->add_option("--out", sy_out, "output WAV")->required();
  sy->add_option("--mel-out", sy_mel, "also dump the mel frames (float32 binary)");
  sy->add_option("--iters", sy_iters, "Griffin-Lim iterations")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "objective metrics over reference/synthesized pairs");
  std::string ev_ref, ev_syn, ev_pairs, ev_out, ev_csv, ev_mos;
  ev->add_option("--ref-dir", ev_ref, "directory of reference WAVs")->required();
  ev->add_option("--syn-dir", ev_syn, "directory of synthesized WAVs")->required();
  ev->add_option("--pairs", ev_pairs, "JSONL: {id, ref, syn[, ref_text, hyp_text]} per line")->required();
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_option("--csv", ev_csv, "per-utterance CSV");
  ev->add_option("--mos-scores", ev_mos, "ratings file to include as MOS");

  // mos
  auto* mo = app.add_subcommand("mos", "aggregate opinion scores");
  std::string mo_scores;
  mo->add_option("--scores", mo_scores, "one rating per line")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) {
      cc.dim_audio = cc.dim_text = cc.dim_vision;
      cc.seed = seed;
      const Corpus c = gen_corpus(cc, gen_out);
      out << "wrote " << c.utterances.size() << " utterances to " << gen_out << "\n";
    } else if (*ta) {
      const Corpus c = load_corpus(ta_data);
      const auto train = samples_of(split_holdout(c).train);
      eac.dim_vision = c.config.dim_vision;
      eac.dim_audio = c.config.dim_audio;
      eac.dim_text = c.config.dim_text;
      eac.classes = c.config.classes;
      eac.anchor = parse_modality(ta_anchor);
      eac.modalities = ModalitySet::parse(ta_mods);
      eac.seed = seed;
      const auto r = train_epalign(train, eac, tac);
      save_ep_align(ta_out, r.params);
      out << std::setprecision(6) << "trained on " << train.size() << " samples; loss " << r.loss_curve.front()
          << " -> " << r.loss_curve.back() << "\n";
    } else if (*ea) {
      const EpAlignParams p = load_ep_align(ea_ckpt);
      const Corpus c = load_corpus(ea_data);
      const auto test = samples_of(split_holdout(c).test);
      const ModalitySet mods = ea_mods.empty() ? p.config.modalities : ModalitySet::parse(ea_mods);
      const auto r = eval_alignment(p, test, mods);
      out << std::fixed << std::setprecision(4) << "modalities " << mods.str() << "  n=" << test.size()
          << "\nmacro F1 " << r.macro_f1 << "\naccuracy " << r.accuracy << "\nconfusion (rows true, cols predicted)\n";
      for (const auto& row : r.confusion) {
        for (std::size_t v : row) out << std::setw(6) << v;
        out << "\n";
      }
      if (ea_out.empty()) ea_out = ea_ckpt + ".eval.json";
      write_text_file(ea_out, report_json(r).dump(2) + "\n");
      out << "report -> " << ea_out << "\n";
    } else if (*tt) {
      const Corpus c = load_corpus(tt_data);
      const EpAlignParams ap = load_ep_align(tt_align);
      TtsConfig tc;
      tc.variant = parse_mechanism(tt_variant);
      tc.emo_dim = ap.config.embed;
      tc.speakers = c.config.speakers;
      tc.seed = seed;
      const auto examples = load_tts_examples(tt_data, split_holdout(c).train, tc.n_mels);
      const auto r = train_tts(examples, prompt_embeddings(ap), tc, ttc);
      save_tts(tt_out, r.params);
      out << std::setprecision(6) << "trained " << to_string(tc.variant) << " on " << examples.size()
          << " utterances; loss " << r.loss_curve.front() << " -> " << r.loss_curve.back() << "\n";
    } else if (*sy) {
      const TtsParams tp = load_tts(sy_ckpt);
      const EpAlignParams ap = load_ep_align(sy_align);
      require(!sy_emotion.empty() || !sy_ref.empty(), ErrorKind::Config, "synth: give --emotion or --ref-features");
      const AlignmentResult a = sy_ref.empty() ? align_prompt(emotion_index(sy_emotion, ap.config.classes), ap)
                                               : align_infer(read_ref_features(sy_ref), ap);
      const SynthResult r = synthesize(sy_text, a.u_emo, sy_speaker, tp, sy_iters);
      wav_write(sy_out, r.waveform);
      if (!sy_mel.empty()) write_file_bytes(sy_mel, encode_mel_dump(r.mel.frames));
      out << "emotion " << emotion_name(a.predicted_class) << ", " << r.mel.frames.rows() << " frames, "
          << r.waveform.size() << " samples -> " << sy_out << "\n";
    } else if (*ev) {
      std::istringstream lines(read_text_file(ev_pairs));
      std::vector<UtteranceScores> scores;
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = ev_pairs + ":" + std::to_string(lineno);
        EvalPair pair;
        try {
          const auto j = nlohmann::json::parse(line);
          pair.id = j.at("id").get<std::string>();
          pair.ref = wav_read(fs::path(ev_ref) / j.at("ref").get<std::string>());
          pair.syn = wav_read(fs::path(ev_syn) / j.at("syn").get<std::string>());
          if (j.contains("ref_text")) pair.ref_text = j.at("ref_text").get<std::string>();
          if (j.contains("hyp_text")) pair.hyp_text = j.at("hyp_text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorKind::Format, where + ": " + e.what());
        }
        scores.push_back(score_pair(pair));
      }
      std::optional<MosSummary> mos;
      if (!ev_mos.empty()) mos = mos_aggregate(read_scores(ev_mos));
      const EvalReport report = aggregate(std::move(scores), mos);
      write_text_file(ev_out, to_json(report).dump(2) + "\n");
      if (!ev_csv.empty()) write_text_file(ev_csv, to_csv(report));
      out << std::setprecision(4) << report.utterances.size() << " pairs; MCD median " << report.mcd_median
          << ", SECS median " << report.secs_median;
      if (report.wer) out << ", WER " << *report.wer << ", CER " << *report.cer;
      out << "\n";
    } else if (*mo) {
      out << mos_aggregate(read_scores(mo_scores)).str() << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace emoforge::cli
