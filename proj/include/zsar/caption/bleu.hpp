#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "zsar/caption/vocabulary.hpp"
#include "zsar/core/error.hpp"
#include "zsar/text/sentence.hpp"

namespace zsar {

struct BleuStatistics {
  std::vector<double> matched;  // clipped n-gram matches per order
  std::vector<double> total;    // candidate n-grams per order
  double candidate_length = 0.0;
  double reference_length = 0.0;
};

inline BleuStatistics bleu_statistics(const std::vector<std::vector<std::string>>& candidates,
                                      const std::vector<std::vector<std::string>>& references,
                                      int max_order) {
  BleuStatistics st;
  st.matched.assign(max_order, 0.0);
  st.total.assign(max_order, 0.0);
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& ref = references[s];
    st.candidate_length += static_cast<double>(cand.size());
    st.reference_length += static_cast<double>(ref.size());
    for (int n = 1; n <= max_order; ++n) {
      std::map<std::vector<std::string>, int> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i)
        ++ref_counts[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
      std::map<std::vector<std::string>, int> cand_counts;
      for (std::size_t i = 0; i + n <= cand.size(); ++i)
        ++cand_counts[std::vector<std::string>(cand.begin() + i, cand.begin() + i + n)];
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) st.matched[n - 1] += std::min(count, it->second);
        st.total[n - 1] += count;
      }
    }
  }
  return st;
}

// Corpus BLEU over caption tokens: geometric mean of clipped n-gram
// precisions for orders 1..n times the brevity penalty. No smoothing, so any
// order without a match gives 0.
inline double bleu(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references, int n) {
  if (candidates.empty()) throw DataError("bleu: empty corpus");
  if (candidates.size() != references.size())
    throw DataError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                    std::to_string(references.size()) + " references");
  if (n < 1) throw ConfigError("bleu: order must be >= 1");
  std::vector<std::vector<std::string>> cand, ref;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand.push_back(caption_tokens(candidates[i].text()));
    ref.push_back(caption_tokens(references[i].text()));
  }
  const BleuStatistics st = bleu_statistics(cand, ref, n);
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (st.matched[k] == 0.0 || st.total[k] == 0.0) return 0.0;
    log_sum += std::log(st.matched[k] / st.total[k]);
  }
  const double c = st.candidate_length, r = st.reference_length;
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / n);
}

}  // namespace zsar
