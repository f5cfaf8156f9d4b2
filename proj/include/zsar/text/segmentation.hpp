#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zsar/text/sentence.hpp"

namespace zsar {

namespace detail {

inline char ascii_lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = ascii_lower(c);
  return out;
}

inline bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
inline bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Tokens ending in '.' that do not terminate a sentence.
constexpr std::array<std::string_view, 26> kAbbreviations = {
    "mr.",  "mrs.",  "ms.", "dr.",  "prof.", "sr.", "jr.",   "st.",   "vs.",
    "etc.", "e.g.",  "i.e.", "approx.", "fig.", "cf.", "inc.", "ltd.", "co.",
    "mt.",  "no.",   "u.s.", "u.k.", "a.m.", "p.m.", "ca.", "est."};

inline bool is_abbreviation(std::string_view token) {
  // Strip leading quotes/brackets: ("Dr. -> dr.
  while (!token.empty() && !is_alnum(token.front())) token.remove_prefix(1);
  const std::string lower = to_lower(token);
  if (std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) != kAbbreviations.end())
    return true;
  // Single-letter initial such as "J."
  return token.size() == 2 && is_upper(token[0]) && token[1] == '.';
}

inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

inline bool is_closer(char c) {
  return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}';
}

// Paragraphs are separated by lines that contain only whitespace. Line breaks
// inside a paragraph collapse to single spaces.
inline std::vector<std::string> split_paragraphs(std::string_view body) {
  std::vector<std::string> paragraphs;
  std::string current;
  std::size_t pos = 0;
  auto flush = [&] {
    std::string t = trim(current);
    if (!t.empty()) paragraphs.push_back(std::move(t));
    current.clear();
  };
  while (pos <= body.size()) {
    std::size_t eol = body.find('\n', pos);
    if (eol == std::string_view::npos) eol = body.size();
    std::string_view line = body.substr(pos, eol - pos);
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current += ' ';
      current += line;
    }
    pos = eol + 1;
  }
  flush();
  for (auto& p : paragraphs) {
    std::string collapsed;
    bool prev_space = false;
    for (char c : p) {
      if (is_space(c)) {
        if (!prev_space) collapsed += ' ';
        prev_space = true;
      } else {
        collapsed += c;
        prev_space = false;
      }
    }
    p = std::move(collapsed);
  }
  return paragraphs;
}

}  // namespace detail

// Splits a document into sentences. A boundary is a run of '.', '!' or '?'
// (optionally followed by closing quotes or brackets) that is followed by
// whitespace or the end of a paragraph, unless the token ending in '.' is a
// known abbreviation or a single-letter initial. Paragraph ends always close
// the current sentence.
inline std::vector<Sentence> split_sentences(const RawDocument& doc) {
  doc.validate();
  std::vector<Sentence> out;
  for (const std::string& para : detail::split_paragraphs(doc.body)) {
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < para.size()) {
      if (!detail::is_terminal(para[i])) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end < para.size() && detail::is_terminal(para[end])) ++end;
      while (end < para.size() && detail::is_closer(para[end])) ++end;
      const bool at_break = end == para.size() || is_space(para[end]);
      bool boundary = at_break;
      if (boundary && para[i] == '.' && end == i + 1) {
        std::size_t tok_start = para.rfind(' ', i);
        tok_start = tok_start == std::string::npos ? 0 : tok_start + 1;
        if (tok_start < start) tok_start = start;
        boundary = !detail::is_abbreviation(std::string_view(para).substr(tok_start, end - tok_start));
      }
      if (boundary) {
        std::string text = trim(std::string_view(para).substr(start, end - start));
        if (!text.empty()) out.emplace_back(std::move(text), SentenceOrigin::document);
        start = end;
      }
      i = end;
    }
    std::string tail = trim(std::string_view(para).substr(start));
    if (!tail.empty()) out.emplace_back(std::move(tail), SentenceOrigin::document);
  }
  return out;
}

namespace detail {

struct Contraction {
  std::string_view from;
  std::string_view to;
};

// Lower-case keys; apostrophes normalised to ASCII before lookup.
constexpr Contraction kContractions[] = {
    {"ain't", "is not"},       {"aren't", "are not"},     {"can't", "cannot"},
    {"could've", "could have"}, {"couldn't", "could not"}, {"didn't", "did not"},
    {"doesn't", "does not"},   {"don't", "do not"},       {"hadn't", "had not"},
    {"hasn't", "has not"},     {"haven't", "have not"},   {"he'd", "he would"},
    {"he'll", "he will"},      {"he's", "he is"},         {"how's", "how is"},
    {"i'd", "I would"},        {"i'll", "I will"},        {"i'm", "I am"},
    {"i've", "I have"},        {"isn't", "is not"},       {"it'd", "it would"},
    {"it'll", "it will"},      {"it's", "it is"},         {"let's", "let us"},
    {"might've", "might have"}, {"mightn't", "might not"}, {"must've", "must have"},
    {"mustn't", "must not"},   {"needn't", "need not"},   {"shan't", "shall not"},
    {"she'd", "she would"},    {"she'll", "she will"},    {"she's", "she is"},
    {"should've", "should have"}, {"shouldn't", "should not"}, {"that's", "that is"},
    {"there's", "there is"},   {"they'd", "they would"},  {"they'll", "they will"},
    {"they're", "they are"},   {"they've", "they have"},  {"wasn't", "was not"},
    {"we'd", "we would"},      {"we'll", "we will"},      {"we're", "we are"},
    {"we've", "we have"},      {"weren't", "were not"},   {"what's", "what is"},
    {"where's", "where is"},   {"who's", "who is"},       {"won't", "will not"},
    {"would've", "would have"}, {"wouldn't", "would not"}, {"you'd", "you would"},
    {"you'll", "you will"},    {"you're", "you are"},     {"you've", "you have"},
    {"y'all", "you all"},
};

inline const Contraction* find_contraction(std::string_view lower) {
  for (const auto& c : kContractions)
    if (c.from == lower) return &c;
  return nullptr;
}

// Replaces U+2019 (right single quotation mark) with ASCII apostrophe.
inline std::string normalize_apostrophes(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        static_cast<unsigned char>(text[i + 2]) == 0x99) {
      out += '\'';
      i += 2;
    } else {
      out += text[i];
    }
  }
  return out;
}

inline std::string apply_case(std::string_view original, std::string_view expansion) {
  std::string out(expansion);
  const bool all_upper =
      original.size() > 1 && std::none_of(original.begin(), original.end(), is_lower);
  if (all_upper) {
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  } else if (!original.empty() && is_upper(original[0])) {
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  }
  return out;
}

template <typename F>
void for_each_word_run(std::string_view text, F&& f) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      f(text.substr(i, 1), false);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && (std::isalpha(static_cast<unsigned char>(text[j])) || text[j] == '\''))
      ++j;
    // A trailing apostrophe belongs to surrounding punctuation, not the word.
    std::size_t k = j;
    while (k > i && text[k - 1] == '\'') --k;
    f(text.substr(i, k - i), true);
    i = k;
  }
}

}  // namespace detail

inline std::string expand_contractions(std::string_view text) {
  const std::string normalized = detail::normalize_apostrophes(text);
  std::string out;
  out.reserve(normalized.size() + 16);
  detail::for_each_word_run(normalized, [&](std::string_view piece, bool is_word) {
    if (is_word) {
      if (const auto* c = detail::find_contraction(detail::to_lower(piece))) {
        out += detail::apply_case(piece, c->to);
        return;
      }
    }
    out += piece;
  });
  return out;
}

inline Sentence expand_contractions(const Sentence& s) {
  return Sentence(expand_contractions(s.text()), s.origin());
}

inline bool contains_contraction(std::string_view text) {
  bool found = false;
  detail::for_each_word_run(detail::normalize_apostrophes(text),
                            [&](std::string_view piece, bool is_word) {
                              if (is_word && detail::find_contraction(detail::to_lower(piece)))
                                found = true;
                            });
  return found;
}

// Lower-case, separators ('_', '-') to spaces, camel case split:
// "horse_riding" -> "horse riding", "YoYo" -> "yo yo".
inline std::string normalize_label(std::string_view label) {
  std::string spaced;
  for (std::size_t i = 0; i < label.size(); ++i) {
    const char c = label[i];
    if (c == '_' || c == '-' || is_space(c)) {
      spaced += ' ';
      continue;
    }
    if (detail::is_upper(c) && i > 0) {
      const char prev = label[i - 1];
      const bool next_lower = i + 1 < label.size() && detail::is_lower(label[i + 1]);
      if (detail::is_lower(prev) || std::isdigit(static_cast<unsigned char>(prev)) ||
          (detail::is_upper(prev) && next_lower))
        spaced += ' ';
    }
    spaced += detail::ascii_lower(c);
  }
  std::string out;
  for (const auto& w : split_whitespace(spaced)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// Lower-cased alphanumeric runs; everything else separates words.
inline std::vector<std::string> content_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (detail::is_alnum(c)) {
      cur += detail::ascii_lower(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace zsar
