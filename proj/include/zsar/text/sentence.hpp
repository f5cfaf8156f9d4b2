#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zsar/core/error.hpp"

namespace zsar {

enum class SentenceOrigin { document, observer, fused };

inline std::string_view to_string(SentenceOrigin o) {
  switch (o) {
    case SentenceOrigin::document: return "document";
    case SentenceOrigin::observer: return "observer";
    case SentenceOrigin::fused: return "fused";
  }
  return "?";
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Number of whitespace-delimited tokens; punctuation glued to a word counts
// with that word.
inline std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

// Natural-language text plus its cached word count. The count is recomputed
// whenever the text changes, so the two never drift apart.
class Sentence {
 public:
  Sentence() = default;
  explicit Sentence(std::string text, SentenceOrigin origin = SentenceOrigin::document)
      : text_(std::move(text)), word_count_(count_words(text_)), origin_(origin) {}

  const std::string& text() const noexcept { return text_; }
  std::size_t word_count() const noexcept { return word_count_; }
  SentenceOrigin origin() const noexcept { return origin_; }
  bool empty() const noexcept { return word_count_ == 0; }

  bool operator==(const Sentence&) const = default;

 private:
  std::string text_;
  std::size_t word_count_ = 0;
  SentenceOrigin origin_ = SentenceOrigin::document;
};

inline std::vector<std::size_t> word_counts(const std::vector<Sentence>& sentences) {
  std::vector<std::size_t> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.word_count());
  return out;
}

struct RawDocument {
  std::string class_label;
  std::string body;
  std::string source_id;

  void validate() const {
    if (trim(class_label).empty()) throw DataError("document has an empty class label");
    if (trim(body).empty())
      throw DataError("empty input: document for class '" + class_label + "' has no text");
  }
};

// Token ids of a sentence under some vocabulary.
struct TokenSequence {
  std::vector<std::size_t> token_ids;
  std::size_t length() const noexcept { return token_ids.size(); }
};

}  // namespace zsar
