#pragma once

// JSON checkpoints ("EPALIGN/1", "EMITTS/1") and the binary mel dump.
//
// Checkpoint layout: {"magic", "config": {...}, "params": {name: {rows, cols, data}}}.
// Doubles are written with round-trip precision, so load(save(p)) == p.
// Mel dump: uint32 T, uint32 N_mel (little-endian), then T*N_mel float32 LE.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "emoforge/datagen.hpp"
#include "emoforge/ep_align.hpp"
#include "emoforge/synth.hpp"

namespace emoforge {

inline constexpr const char* kEpAlignMagic = "EPALIGN/1";
inline constexpr const char* kTtsMagic = "EMITTS/1";

namespace ckpt_detail {

template <class W>
nlohmann::json params_to_json(const W& w) {
  nlohmann::json j = nlohmann::json::object();
  w.visit([&](const char* name, const Matrix& m) {
    j[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
  });
  return j;
}

template <class W>
void params_from_json(W& w, const nlohmann::json& j, const std::string& where) {
  w.visit([&](const char* name, Matrix& m) {
    require(j.contains(name), ErrorKind::Format, where + ": missing parameter '" + name + "'");
    const auto& e = j.at(name);
    const auto rows = e.at("rows").get<std::size_t>();
    const auto cols = e.at("cols").get<std::size_t>();
    auto data = e.at("data").get<Vector>();
    require(rows == m.rows() && cols == m.cols() && data.size() == rows * cols, ErrorKind::Format,
            where + ": parameter '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                ", config implies " + shape_str(m));
    m = Matrix(rows, cols, std::move(data));
    require(m.all_finite(), ErrorKind::Format, where + ": parameter '" + name + "' has non-finite values");
  });
}

inline nlohmann::json parse_checkpoint(const std::filesystem::path& path, const char* magic) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": not a JSON checkpoint (" + e.what() + ")");
  }
  require(j.is_object() && j.value("magic", "") == magic, ErrorKind::Format,
          path.string() + ": expected magic " + magic);
  return j;
}

template <class F>
auto guarded(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

}  // namespace ckpt_detail

inline nlohmann::json to_json(const EpAlignConfig& c) {
  return {{"dim_vision", c.dim_vision}, {"dim_audio", c.dim_audio}, {"dim_text", c.dim_text},
          {"hidden", c.hidden},         {"embed", c.embed},         {"classes", c.classes},
          {"anchor", to_string(c.anchor)}, {"modalities", c.modalities.str()}, {"seed", c.seed}};
}

inline EpAlignConfig ep_align_config_from_json(const nlohmann::json& j) {
  EpAlignConfig c;
  c.dim_vision = j.at("dim_vision").get<std::size_t>();
  c.dim_audio = j.at("dim_audio").get<std::size_t>();
  c.dim_text = j.at("dim_text").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.anchor = parse_modality(j.at("anchor").get<std::string>());
  c.modalities = ModalitySet::parse(j.at("modalities").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void save_ep_align(const std::filesystem::path& path, const EpAlignParams& p) {
  const nlohmann::json j = {{"magic", kEpAlignMagic},
                            {"config", to_json(p.config)},
                            {"params", ckpt_detail::params_to_json(p.weights)}};
  write_text_file(path, j.dump() + "\n");
}

inline EpAlignParams load_ep_align(const std::filesystem::path& path) {
  const auto j = ckpt_detail::parse_checkpoint(path, kEpAlignMagic);
  return ckpt_detail::guarded(path, [&] {
    EpAlignParams p = EpAlignParams::zeros(ep_align_config_from_json(j.at("config")));
    ckpt_detail::params_from_json(p.weights, j.at("params"), path.string());
    return p;
  });
}

inline nlohmann::json to_json(const TtsConfig& c) {
  return {{"variant", to_string(c.variant)}, {"char_dim", c.char_dim}, {"emo_dim", c.emo_dim},
          {"spk_dim", c.spk_dim},            {"speakers", c.speakers}, {"hidden", c.hidden},
          {"n_mels", c.n_mels},              {"seed", c.seed}};
}

inline TtsConfig tts_config_from_json(const nlohmann::json& j) {
  TtsConfig c;
  c.variant = parse_mechanism(j.at("variant").get<std::string>());
  c.char_dim = j.at("char_dim").get<std::size_t>();
  c.emo_dim = j.at("emo_dim").get<std::size_t>();
  c.spk_dim = j.at("spk_dim").get<std::size_t>();
  c.speakers = j.at("speakers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.n_mels = j.at("n_mels").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void save_tts(const std::filesystem::path& path, const TtsParams& p) {
  const nlohmann::json j = {
      {"magic", kTtsMagic}, {"config", to_json(p.config)}, {"params", ckpt_detail::params_to_json(p.weights)}};
  write_text_file(path, j.dump() + "\n");
}

inline TtsParams load_tts(const std::filesystem::path& path) {
  const auto j = ckpt_detail::parse_checkpoint(path, kTtsMagic);
  return ckpt_detail::guarded(path, [&] {
    TtsParams p = TtsParams::init(tts_config_from_json(j.at("config")));
    ckpt_detail::params_from_json(p.weights, j.at("params"), path.string());
    return p;
  });
}

// ---------------------------------------------------------------------------
// Mel dump.

inline std::vector<unsigned char> encode_mel_dump(const Matrix& mel) {
  static_assert(std::endian::native == std::endian::little, "mel dump writer assumes a little-endian host");
  std::vector<unsigned char> out(8 + 4 * mel.size());
  const auto t = static_cast<std::uint32_t>(mel.rows());
  const auto n = static_cast<std::uint32_t>(mel.cols());
  std::memcpy(out.data(), &t, 4);
  std::memcpy(out.data() + 4, &n, 4);
  for (std::size_t i = 0; i < mel.size(); ++i) {
    const auto f = static_cast<float>(mel[i]);
    std::memcpy(out.data() + 8 + 4 * i, &f, 4);
  }
  return out;
}

inline Matrix decode_mel_dump(const std::vector<unsigned char>& bytes, const std::string& where = "<memory>") {
  require(bytes.size() >= 8, ErrorKind::Format, where + ": mel dump shorter than its 8-byte header");
  std::uint32_t t = 0, n = 0;
  std::memcpy(&t, bytes.data(), 4);
  std::memcpy(&n, bytes.data() + 4, 4);
  const std::size_t expected = 8 + 4 * static_cast<std::size_t>(t) * n;
  require(bytes.size() == expected, ErrorKind::Format,
          where + ": mel dump of " + std::to_string(t) + "x" + std::to_string(n) + " needs " +
              std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  Matrix m(t, n);
  for (std::size_t i = 0; i < m.size(); ++i) {
    float f = 0;
    std::memcpy(&f, bytes.data() + 8 + 4 * i, 4);
    m[i] = f;
  }
  return m;
}

}  // namespace emoforge
