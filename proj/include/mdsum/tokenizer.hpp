#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "mdsum/error.hpp"

namespace mdsum {

// Token accounting used by budgeting, packing and retrieval caps.
//
// The built-in tokenizer counts whitespace-separated words, one token each.
// `ratio` converts summary word limits into completion token limits for the
// model the run targets (e.g. 1.145 for Llama-3.1, 1.167 for Command-R,
// 1.219 for Jamba-1.5-Mini).
struct Tokenizer {
  std::string name = "whitespace";
  double ratio = 1.0;

  void validate() const {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
      throw config_error("tokenizer ratio must be positive, got " + std::to_string(ratio));
    }
    if (name != "whitespace") {
      throw config_error("unknown tokenizer '" + name + "'");
    }
  }
};

namespace detail {

constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

inline std::size_t count_tokens(const Tokenizer&, std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    if (detail::is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

// Longest prefix of `text` ending at a token boundary that holds at most `n`
// tokens. Trailing whitespace after the n-th token is not kept.
inline std::string truncate_tokens(const Tokenizer&, std::string_view text, std::size_t n) {
  std::size_t seen = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (detail::is_space(text[i])) {
      if (in_token && seen == n) return std::string(text.substr(0, i));
      in_token = false;
    } else if (!in_token) {
      if (seen == n) {
        // Token n+1 starts here; cut before the whitespace run preceding it.
        std::size_t end = i;
        while (end > 0 && detail::is_space(text[end - 1])) --end;
        return std::string(text.substr(0, end));
      }
      in_token = true;
      ++seen;
    }
  }
  return std::string(text);
}

// ceil(words * ratio); never under-allocates the completion budget.
inline std::size_t words_to_tokens(const Tokenizer& tok, std::size_t words) {
  const long double scaled = static_cast<long double>(words) * static_cast<long double>(tok.ratio);
  // Guard against representation error pushing exact products over an integer.
  const long double rounded = std::round(scaled);
  if (std::fabs(scaled - rounded) < 1e-9L) return static_cast<std::size_t>(rounded);
  return static_cast<std::size_t>(std::ceil(scaled));
}

}  // namespace mdsum
