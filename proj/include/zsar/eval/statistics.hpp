#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "zsar/classify/classifier.hpp"
#include "zsar/core/error.hpp"

namespace zsar {

inline double accuracy(const std::vector<ClassificationResult>& results,
                       const std::map<std::string, std::string>& truth) {
  if (results.empty()) throw DataError("accuracy: no results");
  std::size_t correct = 0;
  for (const auto& r : results) {
    auto it = truth.find(r.video_id);
    if (it == truth.end()) throw DataError("accuracy: no ground truth for video '" + r.video_id + "'");
    if (it->second == r.predicted) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(results.size());
}

// Two-sided t quantile: the value t with P(|T| <= t) = confidence.
inline double t_quantile(double confidence, std::size_t df) {
  if (df == 0) throw ConfigError("t quantile needs at least one degree of freedom");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  boost::math::students_t dist(static_cast<double>(df));
  return boost::math::quantile(dist, 0.5 + confidence / 2.0);
}

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator; 0 when n = 1
  std::size_t n = 0;
  std::optional<double> ci_half_width;  // absent for n = 1
  double confidence = 0.95;
};

// Mean, sample standard deviation and E = t_{conf, n-1} s / sqrt(n).
inline SummaryStats summarize(const std::vector<double>& values, double confidence = 0.95) {
  if (values.empty()) throw DataError("summarize: no values");
  SummaryStats s;
  s.n = values.size();
  s.confidence = confidence;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
  s.ci_half_width = s.std == 0.0 ? 0.0 : t_quantile(confidence, s.n - 1) * s.std / std::sqrt(static_cast<double>(s.n));
  return s;
}

inline json summary_json(const SummaryStats& s) {
  json e = nullptr;
  if (s.ci_half_width) e = *s.ci_half_width;
  return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}, {"ci_half_width", e}, {"confidence", s.confidence}};
}

inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("pearson_correlation: series lengths differ");
  if (x.size() < 2) throw DataError("pearson_correlation: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson_correlation: undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace zsar
