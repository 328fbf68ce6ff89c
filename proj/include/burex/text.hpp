#pragma once

// Small ASCII string helpers shared by the parsers and the rule extractor.
// Report text is treated as bytes; only ASCII letters are case-folded.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace burex::text {

inline bool is_space(char c) noexcept
{
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_char(char c) noexcept
{
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline bool is_digit(char c) noexcept
{
  return c >= '0' && c <= '9';
}

inline std::string to_lower(std::string_view s)
{
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) noexcept
{
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Collapses every run of whitespace into a single space and trims both ends.
inline std::string collapse_whitespace(std::string_view s)
{
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

/// Lowercase, trimmed, single-spaced.
inline std::string normalize(std::string_view s)
{
  return collapse_whitespace(to_lower(s));
}

inline bool iequals(std::string_view a, std::string_view b) noexcept
{
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) noexcept
{
  return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

/// Position of the first whole-word occurrence of `term` in `haystack` at or after `from`.
/// Both arguments are expected to be lowercase already. Hyphens and punctuation count as
/// word boundaries; letters and digits do not.
inline std::size_t find_word(std::string_view haystack, std::string_view term, std::size_t from = 0) noexcept
{
  if (term.empty()) return std::string_view::npos;
  for (std::size_t pos = haystack.find(term, from); pos != std::string_view::npos;
       pos = haystack.find(term, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
    const std::size_t end = pos + term.size();
    const bool right_ok = end >= haystack.size() || !is_word_char(haystack[end]);
    if (left_ok && right_ok) return pos;
  }
  return std::string_view::npos;
}

inline bool contains_word(std::string_view haystack, std::string_view term) noexcept
{
  return find_word(haystack, term) != std::string_view::npos;
}

/// A contiguous slice of a larger text.
struct Span
{
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::string_view view(std::string_view whole) const
  {
    return whole.substr(begin, end - begin);
  }
};

/// Splits text into sentence-like clauses on '.', ';', '!' or '?' followed by whitespace
/// (or end of text), and on blank lines. Decimal points such as "0.4" never split.
/// Returned spans are trimmed and non-empty.
inline std::vector<Span> split_sentences(std::string_view s)
{
  std::vector<Span> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    if (e > b) out.push_back({b, e});
  };
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool at_end = i + 1 == s.size();
    if (c == '.' || c == ';' || c == '!' || c == '?') {
      if (at_end || is_space(s[i + 1])) {
        emit(start, i + 1);
        start = i + 1;
      }
    }
    else if (c == '\n' && !at_end) {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\r')) ++j;
      if (j < s.size() && s[j] == '\n') {
        emit(start, i);
        start = j;
        i = j;
      }
    }
  }
  emit(start, s.size());
  return out;
}

inline std::vector<std::string_view> split_lines(std::string_view s)
{
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    lines.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to)
{
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace burex::text
