#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "wrapup/util.hpp"

namespace wrapup {

// Minimal UTF-8 decoding. Invalid bytes are passed through as single
// codepoints in the Latin-1 range so that text processing never throws.
inline char32_t decode_utf8(std::string_view s, size_t& i) {
  unsigned char c = s[i];
  if (c < 0x80) {
    ++i;
    return c;
  }
  auto cont = [&](size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  if ((c & 0xE0) == 0xC0 && cont(1)) {
    char32_t cp = (c & 0x1F) << 6 | (s[i + 1] & 0x3F);
    i += 2;
    return cp;
  }
  if ((c & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    char32_t cp = (c & 0x0F) << 12 | (s[i + 1] & 0x3F) << 6 | (s[i + 2] & 0x3F);
    i += 3;
    return cp;
  }
  if ((c & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    char32_t cp = (c & 0x07) << 18 | (s[i + 1] & 0x3F) << 12 |
                  (s[i + 2] & 0x3F) << 6 | (s[i + 3] & 0x3F);
    i += 4;
    return cp;
  }
  ++i;
  return c;
}

inline char32_t last_codepoint(std::string_view s) {
  char32_t cp = 0;
  size_t i = 0;
  while (i < s.size()) cp = decode_utf8(s, i);
  return cp;
}

// Punctuation that marks a word as clause-final when it is the word's
// final character: ASCII closers plus em/en dash.
inline bool is_clause_final_punct(char32_t cp) {
  switch (cp) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '"': case '\'': case ')': case ']':
    case 0x2013: case 0x2014:
      return true;
    default:
      return false;
  }
}

inline bool is_sentence_end_punct(char32_t cp) {
  return cp == '.' || cp == '!' || cp == '?';
}

// Punctuation-only tokens made of these characters get re-attached to the
// preceding word during normalization. Hyphens stay free-standing.
inline bool is_attachable_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '"': case '\'': case ')': case ']':
      return true;
    default:
      return false;
  }
}

// Character rewrite table applied by normalize_text:
//   U+2018/19/1A/1B  curly single quotes  -> '
//   U+201C/1D/1E/1F  curly double quotes  -> "
//   U+2026           ellipsis             -> ...
//   U+2012..U+2015   dashes               -> " - " (free-standing hyphen)
//   U+00A0           no-break space       -> space
// Everything else passes through unchanged.
inline void append_normalized(std::string& out, char32_t cp, std::string_view raw) {
  switch (cp) {
    case 0x2018: case 0x2019: case 0x201A: case 0x201B:
      out += '\'';
      return;
    case 0x201C: case 0x201D: case 0x201E: case 0x201F:
      out += '"';
      return;
    case 0x2026:
      out += "...";
      return;
    case 0x2012: case 0x2013: case 0x2014: case 0x2015:
      out += " - ";
      return;
    case 0x00A0:
      out += ' ';
      return;
    default:
      out += raw;
  }
}

// Deterministic approximation of Moses-style normalization: rewrite the
// character table above, then re-attach punctuation-only tokens to the
// preceding word and collapse whitespace.
inline std::string normalize_text(std::string_view raw) {
  std::string mapped;
  mapped.reserve(raw.size());
  size_t i = 0;
  while (i < raw.size()) {
    size_t start = i;
    char32_t cp = decode_utf8(raw, i);
    append_normalized(mapped, cp, raw.substr(start, i - start));
  }

  std::vector<std::string> tokens = split_ws(mapped);
  std::vector<std::string> merged;
  for (auto& tok : tokens) {
    bool all_attach = !tok.empty();
    for (char c : tok)
      if (!is_attachable_punct(c)) all_attach = false;
    if (all_attach && !merged.empty())
      merged.back() += tok;
    else
      merged.push_back(std::move(tok));
  }

  std::string out;
  for (size_t t = 0; t < merged.size(); ++t) {
    if (t) out += ' ';
    out += merged[t];
  }
  return out;
}

// flag[i] = true iff words[i] ends in clause-final punctuation.
inline std::vector<bool> mark_clause_final(const std::vector<std::string>& words) {
  std::vector<bool> flags(words.size(), false);
  for (size_t i = 0; i < words.size(); ++i)
    if (!words[i].empty()) flags[i] = is_clause_final_punct(last_codepoint(words[i]));
  return flags;
}

// Number of codepoints, not bytes.
inline int char_length(std::string_view word) {
  int n = 0;
  size_t i = 0;
  while (i < word.size()) {
    decode_utf8(word, i);
    ++n;
  }
  return n;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
  return out;
}

}  // namespace wrapup
