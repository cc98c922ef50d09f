#pragma once

#include <cctype>
#include <string>
#include <string_view>

#include "emoforge/error.hpp"

namespace emoforge {

/// Character inventory of the synthesizer: a-z, space, period.
inline constexpr std::string_view kVocab = "abcdefghijklmnopqrstuvwxyz .";

inline std::size_t vocab_index(char c) {
  const auto pos = kVocab.find(c);
  require(pos != std::string_view::npos, ErrorKind::InvalidInput,
          std::string("character '") + c + "' is not in the vocabulary");
  return pos;
}

inline bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

/// Lowercases and drops every character outside the vocabulary.
inline std::string normalize_tts_text(std::string_view text) {
  std::string out;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (kVocab.find(c) != std::string_view::npos) out.push_back(c);
  }
  return out;
}

}  // namespace emoforge
