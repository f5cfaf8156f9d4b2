#pragma once

#include <algorithm>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "zsar/core/io.hpp"
#include "zsar/embed/embedding.hpp"
#include "zsar/observers/observers.hpp"
#include "zsar/text/prototypes.hpp"
#include "zsar/text/segmentation.hpp"

namespace zsar {

struct DisjointReport {
  bool pass = true;
  std::vector<std::string> overlap;  // normalised labels present on both sides
};

inline DisjointReport validate_disjoint(const std::vector<std::string>& seen, const std::vector<std::string>& unseen) {
  std::set<std::string> a, b;
  for (const auto& s : seen) a.insert(normalize_label(s));
  for (const auto& s : unseen) b.insert(normalize_label(s));
  DisjointReport r;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r.overlap));
  r.pass = r.overlap.empty();
  return r;
}

struct PrototypeVector {
  std::string class_label;
  std::size_t prototype_index = 0;
  std::string text;
  EmbeddingVector vector;
};

struct JointSpace {
  std::vector<PrototypeVector> prototype_vectors;
  std::string embedder_id;

  std::vector<std::string> classes() const {
    std::set<std::string> s;
    for (const auto& p : prototype_vectors) s.insert(p.class_label);
    return {s.begin(), s.end()};
  }

  void validate() const {
    if (prototype_vectors.empty()) throw DataError("joint space has no prototype vectors");
    const std::size_t dim = prototype_vectors.front().vector.dimension();
    for (const auto& p : prototype_vectors) {
      if (p.vector.embedder_id != embedder_id)
        throw DataError("joint space mixes embedders '" + embedder_id + "' and '" + p.vector.embedder_id + "'");
      if (p.vector.dimension() != dim) throw DataError("joint space vectors have differing dimensions");
    }
  }

  // Space restricted to the given classes; every one of them must be present.
  JointSpace restrict_to(const std::vector<std::string>& keep) const {
    const std::set<std::string> wanted(keep.begin(), keep.end());
    JointSpace out{{}, embedder_id};
    std::set<std::string> found;
    for (const auto& p : prototype_vectors)
      if (wanted.contains(p.class_label)) {
        out.prototype_vectors.push_back(p);
        found.insert(p.class_label);
      }
    for (const auto& c : wanted)
      if (!found.contains(c)) throw DataError("class '" + c + "' has no prototype in the joint space");
    return out;
  }
};

inline JointSpace build_joint_space(const std::vector<PrototypeSet>& sets, const EmbeddingProvider& provider) {
  JointSpace space{{}, provider.id()};
  for (const auto& set : sets) {
    if (set.prototypes.empty()) throw DataError("class '" + set.class_label + "' has no prototypes");
    for (std::size_t i = 0; i < set.prototypes.size(); ++i) {
      try {
        space.prototype_vectors.push_back({set.class_label, i, set.prototypes[i].text(), embed(set.prototypes[i], provider)});
      } catch (const Error& e) {
        rethrow_with_context(e, "class '" + set.class_label + "', prototype " + std::to_string(i) + ": ");
      }
    }
  }
  space.validate();
  return space;
}

inline json space_record(const PrototypeVector& p) {
  return {{"class", p.class_label},
          {"prototype_index", p.prototype_index},
          {"text", p.text},
          {"embedder_id", p.vector.embedder_id},
          {"vector", p.vector.values}};
}

inline std::string format_joint_space(const JointSpace& space) {
  std::vector<json> rows;
  for (const auto& p : space.prototype_vectors) rows.push_back(space_record(p));
  return to_jsonl(rows);
}

// Reads either a materialised space (records carry "vector") or a prototype
// store, which is then embedded with `provider`.
inline JointSpace load_joint_space(const fs::path& path, const EmbeddingProvider* provider) {
  const auto records = read_jsonl(path);
  if (records.empty()) throw DataError(path.string() + ": empty space file");
  if (!records.front().contains("vector")) {
    if (!provider) throw ConfigError(path.string() + " is a prototype store; an embedding provider is required");
    return build_joint_space(parse_prototype_records(records, path.string()), *provider);
  }
  JointSpace space;
  for (const auto& r : records) {
    PrototypeVector p;
    p.class_label = required<std::string>(r, "class", path.string());
    p.prototype_index = required<std::size_t>(r, "prototype_index", path.string());
    p.text = r.value("text", std::string());
    p.vector = {required<std::vector<double>>(r, "vector", path.string()),
                required<std::string>(r, "embedder_id", path.string())};
    space.embedder_id = p.vector.embedder_id;
    space.prototype_vectors.push_back(std::move(p));
  }
  space.validate();
  return space;
}

enum class Aggregation { max, mean };
enum class FusionMode { concatenate, average };

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "max") return Aggregation::max;
  if (s == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + std::string(s) + "' (expected max|mean)");
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "concatenate") return FusionMode::concatenate;
  if (s == "average") return FusionMode::average;
  throw ConfigError("unknown fusion mode '" + std::string(s) + "' (expected concatenate|average)");
}

struct ClassifyOptions {
  Aggregation aggregation = Aggregation::max;
  FusionMode fusion = FusionMode::concatenate;
};

struct ClassificationResult {
  std::string video_id;
  std::string predicted;
  double best_similarity = 0.0;
  std::size_t nearest_prototype_index = 0;  // index within the predicted class
  std::map<std::string, double> per_class_best;

  bool operator==(const ClassificationResult&) const = default;
};

inline json result_record(const ClassificationResult& r) {
  return {{"video_id", r.video_id},
          {"predicted", r.predicted},
          {"best_similarity", r.best_similarity},
          {"nearest_prototype_index", r.nearest_prototype_index},
          {"per_class_best", r.per_class_best}};
}

inline std::vector<ClassificationResult> load_results(const fs::path& path) {
  std::vector<ClassificationResult> out;
  for (const auto& r : read_jsonl(path)) {
    ClassificationResult c;
    c.video_id = required<std::string>(r, "video_id", path.string());
    c.predicted = required<std::string>(r, "predicted", path.string());
    c.best_similarity = required<double>(r, "best_similarity", path.string());
    c.nearest_prototype_index = r.value("nearest_prototype_index", std::size_t{0});
    c.per_class_best = r.value("per_class_best", std::map<std::string, double>{});
    out.push_back(std::move(c));
  }
  return out;
}

// Nearest-prototype rule on a precomputed video embedding. Classes are scored
// by their best (or mean) prototype cosine; ties go to the smallest label.
inline ClassificationResult classify_vector(const std::string& video_id, const EmbeddingVector& video,
                                            const JointSpace& space, Aggregation aggregation = Aggregation::max) {
  if (space.prototype_vectors.empty()) throw DataError("classify: empty joint space");
  if (video.embedder_id != space.embedder_id)
    throw ConfigError("classify: video embedded with '" + video.embedder_id + "' but the space uses '" +
                      space.embedder_id + "'");
  struct Acc {
    double best = -2.0, sum = 0.0;
    std::size_t count = 0, best_index = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& p : space.prototype_vectors) {
    const double s = cosine_similarity(video, p.vector);
    Acc& a = acc[p.class_label];
    if (s > a.best) {
      a.best = s;
      a.best_index = p.prototype_index;
    }
    a.sum += s;
    ++a.count;
  }
  ClassificationResult r{video_id, {}, 0.0, 0, {}};
  bool first = true;
  for (const auto& [label, a] : acc) {
    const double score = aggregation == Aggregation::max ? a.best : a.sum / static_cast<double>(a.count);
    r.per_class_best[label] = score;
    if (first || score > r.best_similarity) {
      r.predicted = label;
      r.best_similarity = score;
      r.nearest_prototype_index = a.best_index;
      first = false;
    }
  }
  return r;
}

// Mean of the per-part embeddings (fusion ablation).
inline EmbeddingVector average_part_embeddings(const FusedDescription& fused, const EmbeddingProvider& provider) {
  if (fused.parts.empty()) throw DataError("video '" + fused.video_id + "' has no observer parts to average");
  EmbeddingVector mean{std::vector<double>(provider.dimension(), 0.0), provider.id()};
  for (const auto& [id, s] : fused.parts) {
    const auto v = embed(s, provider);
    for (std::size_t i = 0; i < v.values.size(); ++i) mean.values[i] += v.values[i];
  }
  for (double& x : mean.values) x /= static_cast<double>(fused.parts.size());
  return mean;
}

inline EmbeddingVector embed_fused(const FusedDescription& fused, const EmbeddingProvider& provider,
                                   FusionMode mode = FusionMode::concatenate) {
  return mode == FusionMode::average ? average_part_embeddings(fused, provider) : embed(fused.sentence, provider);
}

inline ClassificationResult classify(const FusedDescription& fused, const JointSpace& space,
                                     const EmbeddingProvider& provider, const ClassifyOptions& options = {}) {
  if (provider.id() != space.embedder_id)
    throw ConfigError("classify: provider '" + provider.id() + "' does not match the space embedder '" +
                      space.embedder_id + "'");
  return classify_vector(fused.video_id, embed_fused(fused, provider, options.fusion), space, options.aggregation);
}

// Order-preserving batch classification; `threads` > 1 splits the list into
// contiguous chunks. The first failure (in list order) is rethrown with the
// video id attached.
inline std::vector<ClassificationResult> batch_classify(const std::vector<FusedDescription>& fused,
                                                        const JointSpace& space, const EmbeddingProvider& provider,
                                                        const ClassifyOptions& options = {}, std::size_t threads = 1) {
  std::vector<std::optional<ClassificationResult>> slots(fused.size());
  std::vector<std::exception_ptr> errors(fused.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        slots[i] = classify(fused[i], space, provider, options);
      } catch (...) {
        errors[i] = std::current_exception();
        return;
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, fused.size()));
  if (threads == 1) {
    work(0, fused.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (fused.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back(work, std::min(fused.size(), t * chunk), std::min(fused.size(), (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }
  std::vector<ClassificationResult> out;
  out.reserve(fused.size());
  for (std::size_t i = 0; i < fused.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        rethrow_with_context(e, "video '" + fused[i].video_id + "': ");
      }
    }
    if (!slots[i]) break;
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

struct ConfusionMatrix {
  std::vector<std::string> classes;           // row / column order
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]

  std::size_t row_sum(std::size_t r) const {
    std::size_t s = 0;
    for (auto c : counts.at(r)) s += c;
    return s;
  }
  double class_accuracy(std::size_t r) const {
    const std::size_t n = row_sum(r);
    return n == 0 ? 0.0 : static_cast<double>(counts[r][r]) / static_cast<double>(n);
  }
  std::size_t index_of(const std::string& label) const {
    auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw DataError("confusion matrix has no class '" + label + "'");
    return static_cast<std::size_t>(it - classes.begin());
  }
};

// Rows are true classes, columns predictions. `class_order` fixes the layout
// (e.g. grouped by similarity); otherwise labels are sorted.
inline ConfusionMatrix confusion_matrix(const std::vector<ClassificationResult>& results,
                                        const std::map<std::string, std::string>& truth,
                                        const std::vector<std::string>& class_order = {}) {
  std::vector<std::string> classes = class_order;
  if (classes.empty()) {
    std::set<std::string> s;
    for (const auto& r : results) {
      auto it = truth.find(r.video_id);
      if (it == truth.end()) throw DataError("no ground truth for video '" + r.video_id + "'");
      s.insert(it->second);
      s.insert(r.predicted);
    }
    classes.assign(s.begin(), s.end());
  }
  ConfusionMatrix m{classes, std::vector<std::vector<std::size_t>>(classes.size(), std::vector<std::size_t>(classes.size(), 0))};
  for (const auto& r : results) {
    auto it = truth.find(r.video_id);
    if (it == truth.end()) throw DataError("no ground truth for video '" + r.video_id + "'");
    ++m.counts[m.index_of(it->second)][m.index_of(r.predicted)];
  }
  return m;
}

}  // namespace zsar
