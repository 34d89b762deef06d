#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mdsum/tokenizer.hpp"

namespace mdsum {

namespace detail {

constexpr bool is_ascii_punct(char c) noexcept {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

constexpr char ascii_lower(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace detail

// Word segmentation shared by the metrics and the corpus statistics.
//
// Lowercases ASCII letters, splits on whitespace, then peels leading and
// trailing ASCII punctuation off each piece, one token per character.
// Interior punctuation ("u.s", "acu:7", "don't") stays attached.
inline std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_space(text[j])) ++j;
    if (j == i) break;

    std::size_t lo = i;
    std::size_t hi = j;
    while (lo < hi && detail::is_ascii_punct(text[lo])) ++lo;
    while (hi > lo && detail::is_ascii_punct(text[hi - 1])) --hi;

    for (std::size_t k = i; k < lo; ++k) out.emplace_back(1, text[k]);
    if (lo < hi) {
      std::string core(text.substr(lo, hi - lo));
      for (char& c : core) c = detail::ascii_lower(c);
      out.push_back(std::move(core));
    }
    for (std::size_t k = hi; k < j; ++k) out.emplace_back(1, text[k]);
    i = j;
  }
  return out;
}

inline std::size_t word_count(std::string_view text) { return word_tokenize(text).size(); }

}  // namespace mdsum
