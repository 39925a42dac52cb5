#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrapup/text.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

enum class BoundaryMarker { PrefixSpace, HashContinuation, None };

struct SubwordToken {
  std::string text;  // may carry a word-boundary marker
  double surprisal = 0;  // nats
};

struct SubwordFile {
  BoundaryMarker marker = BoundaryMarker::None;
  std::string model;
  std::vector<SubwordToken> tokens;
};

// Per-word surprisal sums plus bookkeeping for the punctuation variant.
struct WordSurprisals {
  std::vector<double> values;
  // Words where punctuation is fused with letters inside one subtoken, so
  // its surprisal cannot be separated out.
  std::vector<bool> fused_punctuation;
};

// JSON-lines import. Header line declares unit ("nats" or "bits"; bits are
// converted), boundary marker convention, and model name; then one
// {"t": "...", "s": <float>} object per subtoken.
inline SubwordFile load_subword_surprisals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path);
  std::string line;
  size_t lineno = 0;
  SubwordFile file;
  double scale = 1.0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw validation_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!header_seen) {
      if (!j.contains("unit") || !j.contains("marker"))
        throw validation_error(path + ":" + std::to_string(lineno) +
                               ": header must declare unit and marker");
      std::string unit = j["unit"];
      if (unit == "nats")
        scale = 1.0;
      else if (unit == "bits")
        scale = std::log(2.0);
      else
        throw validation_error(path + ":" + std::to_string(lineno) +
                               ": unknown unit '" + unit + "'");
      std::string marker = j["marker"];
      if (marker == "prefix-space")
        file.marker = BoundaryMarker::PrefixSpace;
      else if (marker == "hash-continuation")
        file.marker = BoundaryMarker::HashContinuation;
      else if (marker == "none")
        file.marker = BoundaryMarker::None;
      else
        throw validation_error(path + ":" + std::to_string(lineno) +
                               ": unknown marker '" + marker + "'");
      file.model = j.value("model", "imported");
      header_seen = true;
      continue;
    }
    if (!j.contains("t") || !j.contains("s"))
      throw validation_error(path + ":" + std::to_string(lineno) +
                             ": token line missing 't' or 's'");
    SubwordToken tok;
    tok.text = j["t"];
    tok.surprisal = static_cast<double>(j["s"]) * scale;
    if (!std::isfinite(tok.surprisal) || tok.surprisal < 0)
      throw validation_error(path + ":" + std::to_string(lineno) +
                             ": surprisal must be finite and >= 0");
    file.tokens.push_back(std::move(tok));
  }
  if (!header_seen) throw validation_error(path + ": missing header line");
  return file;
}

namespace detail {

inline std::string strip_marker(const std::string& text, BoundaryMarker marker) {
  switch (marker) {
    case BoundaryMarker::PrefixSpace:
      if (!text.empty() && text.front() == ' ') return text.substr(1);
      if (text.size() >= 2 && static_cast<unsigned char>(text[0]) == 0xC4 &&
          static_cast<unsigned char>(text[1]) == 0xA0)
        return text.substr(2);  // U+0120 as used by byte-level BPE
      if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xE2 &&
          static_cast<unsigned char>(text[1]) == 0x96 &&
          static_cast<unsigned char>(text[2]) == 0x81)
        return text.substr(3);  // U+2581, sentencepiece style
      return text;
    case BoundaryMarker::HashContinuation:
      if (text.size() >= 2 && text[0] == '#' && text[1] == '#') return text.substr(2);
      return text;
    case BoundaryMarker::None:
      return text;
  }
  return text;
}

inline bool is_punct_codepoint(char32_t cp) {
  return is_clause_final_punct(cp) || cp == '(' || cp == '[' || cp == '-' ||
         cp == 0x2026;
}

inline bool all_punctuation(std::string_view s) {
  if (s.empty()) return false;
  size_t i = 0;
  while (i < s.size())
    if (!is_punct_codepoint(decode_utf8(s, i))) return false;
  return true;
}

inline bool has_letters_and_punct(std::string_view s) {
  bool letter = false, punct = false;
  size_t i = 0;
  while (i < s.size()) {
    if (is_punct_codepoint(decode_utf8(s, i)))
      punct = true;
    else
      letter = true;
  }
  return letter && punct;
}

}  // namespace detail

// Sum subtoken surprisals into word surprisals by greedy left-to-right
// character consumption. The marker-stripped subtoken characters must
// reproduce the concatenated word characters exactly; a subtoken never
// straddles a word boundary. With exclude_punctuation, subtokens made
// entirely of punctuation contribute nothing to their word's sum.
inline WordSurprisals align_subwords_to_words(const SubwordFile& file,
                                              const std::vector<std::string>& words,
                                              bool exclude_punctuation = false) {
  WordSurprisals out;
  out.values.assign(words.size(), 0.0);
  out.fused_punctuation.assign(words.size(), false);
  size_t word = 0;   // current word
  size_t offset = 0; // bytes of words[word] already consumed
  size_t consumed = 0;  // total characters consumed, for error reporting
  for (size_t t = 0; t < file.tokens.size(); ++t) {
    std::string piece = detail::strip_marker(file.tokens[t].text, file.marker);
    if (piece.empty()) continue;
    while (word < words.size() && offset == words[word].size()) {
      ++word;
      offset = 0;
    }
    if (word >= words.size())
      throw validation_error("alignment error: subtokens continue past the last word (offset " +
                             std::to_string(consumed) + ")");
    const std::string& w = words[word];
    size_t avail = w.size() - offset;
    size_t overlap = std::min(piece.size(), avail);
    for (size_t j = 0; j < overlap; ++j)
      if (piece[j] != w[offset + j])
        throw validation_error("alignment error: subtoken '" + piece +
                               "' does not match word '" + w + "' at offset " +
                               std::to_string(consumed + j));
    if (piece.size() > avail)
      throw validation_error("alignment error: subtoken '" + piece +
                             "' straddles the boundary after word '" + w + "'");
    bool skip = exclude_punctuation && detail::all_punctuation(piece);
    if (!skip) out.values[word] += file.tokens[t].surprisal;
    if (exclude_punctuation && detail::has_letters_and_punct(piece))
      out.fused_punctuation[word] = true;
    offset += piece.size();
    consumed += piece.size();
  }
  while (word < words.size() && offset == words[word].size()) {
    ++word;
    offset = 0;
  }
  if (word < words.size())
    throw validation_error("alignment error: subtokens end before word '" +
                           words[word] + "' (offset " + std::to_string(consumed) + ")");
  return out;
}

}  // namespace wrapup
