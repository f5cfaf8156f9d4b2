#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zsar/core/error.hpp"
#include "zsar/text/sentence.hpp"

namespace zsar {

struct EmbeddingVector {
  std::vector<double> values;
  std::string embedder_id;

  std::size_t dimension() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

// Anything that maps text to a fixed-dimension vector. Implementations must be
// deterministic and safe to call concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed_text(std::string_view text) const = 0;
};

inline EmbeddingVector embed(std::string_view text, const EmbeddingProvider& provider) {
  if (count_words(text) == 0) throw DataError("cannot embed an empty sentence");
  EmbeddingVector v = provider.embed_text(text);
  if (v.dimension() != provider.dimension())
    throw NumericError("embedder '" + provider.id() + "' returned dimension " +
                       std::to_string(v.dimension()) + ", expected " +
                       std::to_string(provider.dimension()));
  for (double x : v.values)
    if (!std::isfinite(x))
      throw NumericError("embedder '" + provider.id() + "' produced a non-finite value");
  return v;
}

inline EmbeddingVector embed(const Sentence& sentence, const EmbeddingProvider& provider) {
  return embed(sentence.text(), provider);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// dot(a,b) / (|a| |b|), clamped to [-1, 1] against rounding. Zero-norm inputs
// are an error, never a silent 0.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DataError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()));
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values, b.values);
}

}  // namespace zsar
