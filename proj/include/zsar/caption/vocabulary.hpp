#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "zsar/core/error.hpp"
#include "zsar/text/segmentation.hpp"

namespace zsar {

// Caption tokens: lower-cased words, with sentence punctuation split off
// into tokens of its own.
inline std::vector<std::string> caption_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& raw : split_whitespace(text)) {
    std::string w = detail::to_lower(raw);
    std::vector<std::string> trailing;
    while (!w.empty() && std::string_view(".,!?;:").find(w.back()) != std::string_view::npos) {
      trailing.insert(trailing.begin(), std::string(1, w.back()));
      w.pop_back();
    }
    if (!w.empty()) out.push_back(std::move(w));
    for (auto& p : trailing) out.push_back(std::move(p));
  }
  return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    const bool punct = t.size() == 1 && std::string_view(".,!?;:").find(t[0]) != std::string_view::npos;
    if (!out.empty() && !punct) out += ' ';
    out += t;
  }
  return out;
}

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;

  Vocabulary() : tokens_{"<pad>", "<bos>", "<eos>", "<unk>"} { reindex(); }

  // Reserved ids first, then every caption token in lexicographic order.
  static Vocabulary build(const std::vector<std::string>& captions) {
    std::set<std::string> words;
    for (const auto& c : captions)
      for (auto& t : caption_tokens(c)) words.insert(std::move(t));
    Vocabulary v;
    for (const auto& w : words) v.tokens_.push_back(w);
    v.reindex();
    return v;
  }

  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[1] != "<bos>" || tokens[2] != "<eos>" ||
        tokens[3] != "<unk>")
      throw DataError("vocabulary must start with <pad> <bos> <eos> <unk>");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.reindex();
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " out of vocabulary");
    return tokens_[id];
  }
  bool contains(const std::string& w) const { return index_.contains(w); }

  // Strict encoding: any unknown token is an error.
  std::vector<std::size_t> encode(std::string_view caption) const {
    std::vector<std::size_t> ids;
    for (const auto& t : caption_tokens(caption)) {
      auto it = index_.find(t);
      if (it == index_.end())
        throw DataError("caption token '" + t + "' is not in the vocabulary: \"" + std::string(caption) + "\"");
      ids.push_back(it->second);
    }
    return ids;
  }

  std::string decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> words;
    for (std::size_t id : ids) {
      if (id == kBos || id == kPad) continue;
      if (id == kEos) break;
      words.push_back(token(id));
    }
    return detokenize(words);
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token: " + tokens_[i]);
    }
  }

  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace zsar
