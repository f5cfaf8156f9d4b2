#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zsar/core/io.hpp"
#include "zsar/core/random.hpp"
#include "zsar/embed/embedding.hpp"
#include "zsar/text/segmentation.hpp"

namespace zsar {

// Bag-of-words counts hashed into a fixed number of buckets. Shared words
// between two texts are the only source of cosine similarity, which makes it
// a transparent stand-in for a paraphrase model in tests and fixtures.
class WordOverlapProvider final : public EmbeddingProvider {
 public:
  explicit WordOverlapProvider(std::size_t dimension = 1024) : dimension_(dimension) {
    if (dimension_ == 0) throw ConfigError("overlap embedder needs a positive dimension");
  }

  std::string id() const override { return "overlap-" + std::to_string(dimension_); }
  std::size_t dimension() const override { return dimension_; }

  EmbeddingVector embed_text(std::string_view text) const override {
    EmbeddingVector v{std::vector<double>(dimension_, 0.0), id()};
    const auto tokens = content_tokens(text);
    bool any_content = false;
    for (const auto& t : tokens) {
      if (is_stop_word(t)) continue;
      v.values[stable_hash(t) % dimension_] += 1.0;
      any_content = true;
    }
    if (!any_content)
      for (const auto& t : tokens) v.values[stable_hash(t) % dimension_] += 1.0;
    return v;
  }

  static bool is_stop_word(std::string_view w) {
    static const std::unordered_set<std::string_view> stop = {
        "a",    "an",   "the",  "and",  "or",   "of",   "to",   "in",   "on",  "at",
        "is",   "are",  "was",  "were", "be",   "been", "it",   "its",  "by",  "for",
        "with", "as",   "that", "this", "from", "but",  "not",  "he",   "she", "they",
        "his",  "her",  "their", "has", "have", "had",  "which", "who", "while", "into"};
    return stop.contains(w);
  }

 private:
  std::size_t dimension_;
};

// Exact-text lookup into a vector table:
//   #dim=<n> id=<embedder_id>
//   <text>\t<v1>\t...\t<vn>
class VectorTableProvider final : public EmbeddingProvider {
 public:
  VectorTableProvider(std::string id, std::size_t dimension)
      : id_(std::move(id)), dimension_(dimension) {}

  static VectorTableProvider load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vector table: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("#dim=", 0) != 0)
      throw DataError(path.string() + ": missing '#dim=<n> id=<id>' header");
    std::size_t dim = 0;
    std::string id;
    for (const auto& field : split_whitespace(std::string_view(line).substr(1))) {
      if (field.rfind("dim=", 0) == 0)
        dim = static_cast<std::size_t>(parse_double(field.substr(4), path.string() + " header"));
      else if (field.rfind("id=", 0) == 0)
        id = field.substr(3);
    }
    if (dim == 0 || id.empty()) throw DataError(path.string() + ": malformed header: " + line);
    VectorTableProvider table(id, dim);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string where = path.string() + ":" + std::to_string(line_no);
      std::vector<std::string_view> fields;
      std::size_t pos = 0;
      while (true) {
        const std::size_t tab = line.find('\t', pos);
        fields.emplace_back(std::string_view(line).substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) break;
        pos = tab + 1;
      }
      if (fields.size() != dim + 1)
        throw DataError(where + ": dimension mismatch, expected " + std::to_string(dim) +
                        " values, found " + std::to_string(fields.size() - 1));
      std::vector<double> values;
      values.reserve(dim);
      for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_double(fields[i], where));
      table.insert(std::string(fields[0]), std::move(values));
    }
    return table;
  }

  void insert(std::string text, std::vector<double> values) {
    if (values.size() != dimension_)
      throw DataError("vector table '" + id_ + "': dimension mismatch for '" + text + "'");
    auto [it, inserted] = entries_.try_emplace(std::move(text), std::move(values));
    if (!inserted && it->second != values)
      throw DataError("vector table '" + id_ + "': conflicting vectors for '" + it->first + "'");
  }

  std::string id() const override { return id_; }
  std::size_t dimension() const override { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view text) const { return entries_.contains(std::string(text)); }

  EmbeddingVector embed_text(std::string_view text) const override {
    auto it = entries_.find(std::string(text));
    if (it == entries_.end())
      throw DataError("vector table '" + id_ + "' has no vector for sentence: \"" +
                      std::string(text) + "\"");
    return {it->second, id_};
  }

 private:
  std::string id_;
  std::size_t dimension_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

inline std::string format_vector_table(const std::string& id, std::size_t dimension,
                                       const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::string out = "#dim=" + std::to_string(dimension) + " id=" + id + "\n";
  for (const auto& [text, values] : rows) {
    if (text.find_first_of("\t\n\r") != std::string::npos)
      throw DataError("vector table text may not contain tabs or newlines: \"" + text + "\"");
    if (values.size() != dimension) throw DataError("vector table row has wrong dimension");
    out += text;
    for (double v : values) {
      out += '\t';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

// Memoising wrapper; counts how often the wrapped provider is consulted.
class CachingProvider final : public EmbeddingProvider {
 public:
  explicit CachingProvider(std::shared_ptr<const EmbeddingProvider> inner)
      : inner_(std::move(inner)) {}

  std::string id() const override { return inner_->id(); }
  std::size_t dimension() const override { return inner_->dimension(); }

  EmbeddingVector embed_text(std::string_view text) const override {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(std::string(text));
    if (it != cache_.end()) return it->second;
    ++misses_;
    EmbeddingVector v = inner_->embed_text(text);
    cache_.emplace(std::string(text), v);
    return v;
  }

  std::size_t inner_calls() const {
    std::lock_guard lock(mutex_);
    return misses_;
  }

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, EmbeddingVector> cache_;
  mutable std::size_t misses_ = 0;
};

}  // namespace zsar
