#pragma once

// UTF-8 helpers, the tokenizer and character-exact truncation.
//
// All functions treat text as a sequence of Unicode scalar values. Inputs
// are expected to be valid UTF-8 (the corpus loader rejects anything else);
// ill-formed bytes are skipped one at a time rather than crashing.

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chishot {

namespace utf8 {

/// Byte offset of the first ill-formed sequence, or nullopt if `s` is valid.
inline std::optional<std::size_t> first_invalid(std::string_view s) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto n = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  while (i < n) {
    const std::int32_t start = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) return static_cast<std::size_t>(start);
  }
  return std::nullopt;
}

/// Number of code points in `s`.
inline std::size_t length(std::string_view s) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto n = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  std::size_t count = 0;
  while (i < n) {
    U8_FWD_1(p, i, n);
    ++count;
  }
  return count;
}

/// Byte length of the first `chars` code points of `s` (whole string if shorter).
inline std::size_t prefix_bytes(std::string_view s, std::size_t chars) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto n = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  for (std::size_t k = 0; k < chars && i < n; ++k) U8_FWD_1(p, i, n);
  return static_cast<std::size_t>(i);
}

inline void append(std::string& out, UChar32 c) {
  std::uint8_t buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  U8_APPEND_UNSAFE(buf, len, c);
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

/// Simple (one-to-one) Unicode lowercase mapping.
inline std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto n = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c >= 0) append(out, u_tolower(c));
  }
  return out;
}

}  // namespace utf8

struct TokenizerConfig {
  bool lowercase = true;
  std::size_t min_token_length = 1;  // in characters
  std::set<std::string> stopwords;   // compared after lowercasing

  bool operator==(const TokenizerConfig&) const = default;
};

/// Splits `text` into maximal runs of Unicode alphanumeric characters.
inline std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {}) {
  std::vector<std::string> tokens;
  const auto* p = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto n = static_cast<std::int32_t>(text.size());

  std::string current;
  std::size_t current_chars = 0;
  auto flush = [&] {
    if (current_chars >= config.min_token_length && current_chars > 0 &&
        !config.stopwords.contains(current)) {
      tokens.push_back(current);
    }
    current.clear();
    current_chars = 0;
  };

  std::int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c >= 0 && u_isalnum(c)) {
      utf8::append(current, config.lowercase ? u_tolower(c) : c);
      ++current_chars;
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

/// Prefix of `text` holding min(length(text), limit) characters.
inline std::string truncate_chars(std::string_view text, std::size_t limit) {
  return std::string(text.substr(0, utf8::prefix_bytes(text, limit)));
}

}  // namespace chishot
