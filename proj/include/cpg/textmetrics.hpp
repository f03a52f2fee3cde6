// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic English tokenizer and the five classic readability indices.
//
// Tokenization rules:
//   * word: maximal run of alphanumerics, joined by an apostrophe (' or U+2019)
//     or hyphen only when alphanumerics follow ("don't", "fast-swimming").
//   * sentence boundary: a run of '.', '!' or '?' (optionally followed by
//     closing quotes/brackets) that is followed by whitespace or end of text.
//     A lone '.' after a listed abbreviation ("Mr.", "e.g.") is not a boundary.
//     Boundaries with no word since the previous one are ignored, and trailing
//     words without a terminator form a final sentence.
//   * syllables: vowel groups over a e i o u y; a terminal silent 'e' is
//     dropped unless the word ends in consonant + "le"; a terminal "-ed" or
//     "-es" that is not pronounced as its own syllable is dropped; minimum 1.
//     Tokens with no letters (numbers) count as one syllable.
//   * complex word: three or more syllables, except capitalized words that do
//     not start a sentence (proper-noun proxy).
//   * letter_count: alphabetic characters; character_count: alphanumerics.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>

#include "cpg/error.hpp"

namespace cpg {

struct TextStats {
  std::size_t sentence_count = 0;
  std::size_t word_count = 0;
  std::size_t letter_count = 0;     // alphabetic only (Coleman-Liau)
  std::size_t character_count = 0;  // alphanumeric (ARI)
  std::size_t syllable_count = 0;
  std::size_t complex_word_count = 0;
  std::size_t unique_word_count = 0;  // case-folded
  bool operator==(const TextStats&) const = default;
};

struct ReadabilityReport {
  double flesch_reading_ease = 0;
  double flesch_kincaid_grade = 0;
  double gunning_fog = 0;
  double automated_readability_index = 0;
  double coleman_liau = 0;
  TextStats stats;
  bool operator==(const ReadabilityReport&) const = default;
};

namespace text_detail {

// Decodes UTF-8; malformed sequences become U+FFFD.
inline std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Letters: ASCII plus the Latin-1 Supplement / Latin Extended-A,B blocks.
constexpr bool is_alpha(char32_t c) noexcept {
  if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z')) return true;
  return c >= 0xC0 && c <= 0x24F && c != 0xD7 && c != 0xF7;
}
constexpr bool is_digit(char32_t c) noexcept { return c >= U'0' && c <= U'9'; }
constexpr bool is_alnum(char32_t c) noexcept { return is_alpha(c) || is_digit(c); }
constexpr bool is_upper(char32_t c) noexcept {
  return (c >= U'A' && c <= U'Z') || (c >= 0xC0 && c <= 0xDE && c != 0xD7);
}
constexpr bool is_apostrophe(char32_t c) noexcept { return c == U'\'' || c == 0x2019; }
constexpr bool is_hyphen(char32_t c) noexcept { return c == U'-' || c == 0x2010 || c == 0x2011; }
constexpr bool is_terminator(char32_t c) noexcept { return c == U'.' || c == U'!' || c == U'?'; }
constexpr bool is_closer(char32_t c) noexcept {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'}' ||
         c == 0x201D || c == 0x2019 || c == 0xBB;
}
constexpr bool is_opener(char32_t c) noexcept {
  return c == U'"' || c == U'\'' || c == U'(' || c == U'[' || c == U'{' ||
         c == 0x201C || c == 0x2018 || c == 0xAB;
}
constexpr bool is_space(char32_t c) noexcept {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' ||
         c == U'\v' || c == 0xA0 || (c >= 0x2000 && c <= 0x200A) ||
         c == 0x2028 || c == 0x2029 || c == 0x3000;
}

// Case fold; Latin letters with diacritics keep their diacritic.
constexpr char32_t fold_case(char32_t c) noexcept {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  return c;
}

// Base ASCII letter for syllable counting ('é' -> 'e'); other letters map to 'x'.
constexpr char base_letter(char32_t c) noexcept {
  c = fold_case(c);
  if (c >= U'a' && c <= U'z') return static_cast<char>(c);
  if (c >= 0xE0 && c <= 0xE5) return 'a';
  if (c >= 0xE8 && c <= 0xEB) return 'e';
  if (c >= 0xEC && c <= 0xEF) return 'i';
  if ((c >= 0xF2 && c <= 0xF6) || c == 0xF8) return 'o';
  if (c >= 0xF9 && c <= 0xFC) return 'u';
  if (c == 0xFD || c == 0xFF) return 'y';
  if (c == 0xE7) return 'c';
  if (c == 0xF1) return 'n';
  if (c == 0xDF) return 's';
  return 'x';  // other Latin letters: treated as consonants
}

constexpr bool is_vowel(char c) noexcept {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}

inline std::size_t syllables_of_letters(std::string_view s) {
  std::size_t groups = 0;
  bool in_group = false;
  for (char c : s) {
    const bool v = is_vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  const std::size_t n = s.size();
  auto consonant_at = [&](std::size_t i) { return !is_vowel(s[i]); };
  auto ends_with = [&](std::string_view suffix) {
    return n >= suffix.size() && s.substr(n - suffix.size()) == suffix;
  };
  if (n > 0 && s[n - 1] == 'e') {
    const bool consonant_le = n >= 3 && s[n - 2] == 'l' && consonant_at(n - 3);
    if (!consonant_le && groups > 0) --groups;
  } else if (n >= 4 && ends_with("ed")) {
    const char before = s[n - 3];
    if (consonant_at(n - 3) && before != 't' && before != 'd' && groups > 0) --groups;
  } else if (n >= 4 && ends_with("es")) {
    const char before = s[n - 3];
    const bool sibilant = before == 's' || before == 'x' || before == 'z' ||
                          before == 'c' || before == 'g' || ends_with("ches") ||
                          ends_with("shes");
    const bool consonant_les = n >= 5 && before == 'l' && consonant_at(n - 4);
    if (consonant_at(n - 3) && !sibilant && !consonant_les && groups > 0) --groups;
  }
  return groups == 0 ? 1 : groups;
}

constexpr std::array<std::string_view, 11> kAbbreviations = {
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "e.g.", "i.e."};

}  // namespace text_detail

// Syllable estimate for one word. Throws InvalidArgumentError when the word
// has no alphabetic character.
inline std::size_t count_syllables(std::string_view word) {
  std::string letters;
  for (char32_t c : text_detail::decode_utf8(word)) {
    if (text_detail::is_alpha(c)) letters.push_back(text_detail::base_letter(c));
  }
  if (letters.empty()) {
    throw InvalidArgumentError("count_syllables: '" + std::string(word) +
                               "' has no alphabetic character");
  }
  return text_detail::syllables_of_letters(letters);
}

namespace text_detail {

struct Scan {
  TextStats stats;
  std::set<std::string> vocabulary;
};

inline Scan scan(std::string_view text) {
  const std::u32string cps = decode_utf8(text);
  const std::size_t n = cps.size();
  Scan out;
  TextStats& st = out.stats;
  std::size_t words_in_sentence = 0;
  std::size_t i = 0;
  while (i < n) {
    const char32_t c = cps[i];
    if (is_alnum(c)) {
      const std::size_t start = i;
      while (i < n && is_alnum(cps[i])) ++i;
      while (i + 1 < n && (is_apostrophe(cps[i]) || is_hyphen(cps[i])) && is_alnum(cps[i + 1])) {
        ++i;
        while (i < n && is_alnum(cps[i])) ++i;
      }
      std::string letters;
      std::string key;
      std::size_t alpha = 0, alnum = 0;
      for (std::size_t k = start; k < i; ++k) {
        const char32_t w = cps[k];
        if (is_alpha(w)) {
          ++alpha;
          letters.push_back(base_letter(w));
        }
        if (is_alnum(w)) ++alnum;
        if (is_apostrophe(w)) {
          key.push_back('\'');
        } else if (is_hyphen(w)) {
          key.push_back('-');
        } else {
          append_utf8(key, fold_case(w));
        }
      }
      const std::size_t syl = letters.empty() ? 1 : syllables_of_letters(letters);
      const bool sentence_initial = words_in_sentence == 0;
      const bool proper = is_upper(cps[start]) && !sentence_initial;
      ++st.word_count;
      st.letter_count += alpha;
      st.character_count += alnum;
      st.syllable_count += syl;
      if (syl >= 3 && !proper) ++st.complex_word_count;
      out.vocabulary.insert(std::move(key));
      ++words_in_sentence;
      continue;
    }
    if (is_terminator(c)) {
      const std::size_t run_start = i;
      while (i < n && is_terminator(cps[i])) ++i;
      const std::size_t run_len = i - run_start;
      while (i < n && is_closer(cps[i])) ++i;
      const bool at_break = i == n || is_space(cps[i]);
      if (!at_break) continue;
      if (run_len == 1 && cps[run_start] == U'.') {
        std::size_t b = run_start;
        while (b > 0 && !is_space(cps[b - 1])) --b;
        while (b < run_start && is_opener(cps[b])) ++b;
        std::string token;
        for (std::size_t k = b; k <= run_start; ++k) append_utf8(token, fold_case(cps[k]));
        bool abbreviation = false;
        for (auto a : kAbbreviations) abbreviation = abbreviation || token == a;
        if (abbreviation) continue;
      }
      if (words_in_sentence > 0) {
        ++st.sentence_count;
        words_in_sentence = 0;
      }
      continue;
    }
    ++i;
  }
  if (words_in_sentence > 0) ++st.sentence_count;
  st.unique_word_count = out.vocabulary.size();
  return out;
}

inline void require_defined(const TextStats& s, const char* formula) {
  if (s.word_count == 0 || s.sentence_count == 0) {
    throw UndefinedInputError(std::string(formula) +
                              ": requires at least one word and one sentence");
  }
}

}  // namespace text_detail

inline TextStats tokenize(std::string_view text) {
  return text_detail::scan(text).stats;
}

inline std::size_t unique_word_count(std::string_view text) {
  return text_detail::scan(text).vocabulary.size();
}

inline double flesch_reading_ease(const TextStats& s) {
  text_detail::require_defined(s, "flesch_reading_ease");
  const double w = static_cast<double>(s.word_count);
  return 206.835 - 1.015 * (w / static_cast<double>(s.sentence_count)) -
         84.6 * (static_cast<double>(s.syllable_count) / w);
}

inline double flesch_kincaid_grade(const TextStats& s) {
  text_detail::require_defined(s, "flesch_kincaid_grade");
  const double w = static_cast<double>(s.word_count);
  return 0.39 * (w / static_cast<double>(s.sentence_count)) +
         11.8 * (static_cast<double>(s.syllable_count) / w) - 15.59;
}

inline double gunning_fog(const TextStats& s) {
  text_detail::require_defined(s, "gunning_fog");
  const double w = static_cast<double>(s.word_count);
  return 0.4 * ((w / static_cast<double>(s.sentence_count)) +
                100.0 * (static_cast<double>(s.complex_word_count) / w));
}

inline double automated_readability_index(const TextStats& s) {
  text_detail::require_defined(s, "automated_readability_index");
  const double w = static_cast<double>(s.word_count);
  return 4.71 * (static_cast<double>(s.character_count) / w) +
         0.5 * (w / static_cast<double>(s.sentence_count)) - 21.43;
}

// L = letters per 100 words, S = sentences per 100 words.
inline double coleman_liau(const TextStats& s) {
  text_detail::require_defined(s, "coleman_liau");
  const double w = static_cast<double>(s.word_count);
  const double letters_per_100 = static_cast<double>(s.letter_count) / w * 100.0;
  const double sentences_per_100 = static_cast<double>(s.sentence_count) / w * 100.0;
  return 0.0588 * letters_per_100 - 0.296 * sentences_per_100 - 15.8;
}

inline ReadabilityReport readability_from_stats(const TextStats& s) {
  return {flesch_reading_ease(s), flesch_kincaid_grade(s), gunning_fog(s),
          automated_readability_index(s), coleman_liau(s), s};
}

inline ReadabilityReport readability_report(std::string_view text) {
  const TextStats s = tokenize(text);
  if (s.word_count == 0) throw UndefinedInputError("readability_report: text has no words");
  return readability_from_stats(s);
}

}  // namespace cpg
