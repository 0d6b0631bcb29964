#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dreamaffect {

/// Lower-cased word tokens: runs of ASCII alphanumerics, apostrophes, and any
/// non-ASCII bytes (so UTF-8 words stay whole).
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct Truncated {
  std::string text;
  bool truncated = false;
};

/// Keeps the first `max_tokens` whitespace-separated tokens.
inline Truncated truncate_tokens(std::string_view text, std::size_t max_tokens) {
  std::size_t count = 0;
  std::size_t i = 0;
  std::size_t last_end = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    if (count == max_tokens) return {std::string(text.substr(0, last_end)), true};
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    last_end = i;
    ++count;
  }
  return {std::string(text), false};
}

}  // namespace dreamaffect
