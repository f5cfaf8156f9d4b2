#pragma once

#include <algorithm>
#include <charconv>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zsar/caption/training.hpp"
#include "zsar/classify/classifier.hpp"
#include "zsar/embed/providers.hpp"
#include "zsar/eval/protocol.hpp"
#include "zsar/eval/statistics.hpp"
#include "zsar/observers/observers.hpp"
#include "zsar/text/prototypes.hpp"

namespace zsar {

struct ExperimentData {
  std::vector<RawDocument> documents;
  std::map<std::string, std::string> truth;  // video id -> class label
  const ObserverBank* observers = nullptr;
};

struct ExperimentSettings {
  std::vector<std::string> observers;
  PrototypeConfig prototypes;
  std::shared_ptr<const EmbeddingProvider> selection;
  std::shared_ptr<const EmbeddingProvider> space;
  ClassifyOptions classify;
  Protocol protocol;
};

struct RunResult {
  Split split;
  std::vector<ClassificationResult> results;
  double accuracy = 0.0;
};

struct ExperimentOutcome {
  std::vector<RunResult> runs;
  SummaryStats summary;
  std::vector<PrototypeSet> prototypes;
  JointSpace space;
  std::vector<FusedDescription> fused;
  std::map<std::string, EmbeddingVector> video_vectors;
};

// Maps protocol class names onto document labels by normalised comparison.
inline std::vector<std::string> resolve_classes(const std::vector<std::string>& names,
                                                const std::vector<RawDocument>& documents) {
  std::map<std::string, std::string> by_norm;
  for (const auto& d : documents) by_norm.emplace(normalize_label(d.class_label), d.class_label);
  std::vector<std::string> out;
  for (const auto& n : names) {
    auto it = by_norm.find(normalize_label(n));
    if (it == by_norm.end()) throw DataError("class '" + n + "' has no description document");
    out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<PrototypeSet> build_prototype_sets(const std::vector<RawDocument>& documents,
                                                      const std::set<std::string>& classes,
                                                      const PrototypeConfig& cfg, const EmbeddingProvider& selection) {
  std::vector<PrototypeSet> sets;
  for (const auto& d : documents)
    if (classes.contains(d.class_label))
      sets.push_back(build_prototypes(d.class_label, document_sentences(d), cfg, selection));
  return sets;
}

inline ExperimentOutcome run_experiment(const ExperimentData& data, const ExperimentSettings& s) {
  if (!data.observers) throw ConfigError("experiment has no observers");
  if (!s.selection || !s.space) throw ConfigError("experiment needs selection and space embedders");
  std::vector<std::string> all_classes;
  for (const auto& d : data.documents) all_classes.push_back(d.class_label);
  std::vector<Split> splits = protocol_splits(all_classes, s.protocol);
  std::set<std::string> needed;
  for (auto& sp : splits) {
    sp.unseen = resolve_classes(sp.unseen, data.documents);
    needed.insert(sp.unseen.begin(), sp.unseen.end());
  }

  ExperimentOutcome out;
  out.prototypes = build_prototype_sets(data.documents, needed, s.prototypes, *s.selection);
  out.space = build_joint_space(out.prototypes, *s.space);

  std::vector<std::string> videos;
  for (const auto& [v, c] : data.truth)
    if (needed.contains(c)) videos.push_back(v);
  out.fused = data.observers->observer_subset(videos, s.observers);
  for (const auto& f : out.fused) {
    try {
      out.video_vectors.emplace(f.video_id, embed_fused(f, *s.space, s.classify.fusion));
    } catch (const Error& e) {
      rethrow_with_context(e, "video '" + f.video_id + "': ");
    }
  }

  std::vector<double> accuracies;
  for (const auto& sp : splits) {
    RunResult run{sp, {}, 0.0};
    const JointSpace restricted = out.space.restrict_to(sp.unseen);
    const std::set<std::string> unseen(sp.unseen.begin(), sp.unseen.end());
    for (const auto& [v, c] : data.truth)
      if (unseen.contains(c))
        run.results.push_back(classify_vector(v, out.video_vectors.at(v), restricted, s.classify.aggregation));
    if (run.results.empty()) throw DataError("no test videos for the classes of a split");
    run.accuracy = accuracy(run.results, data.truth);
    accuracies.push_back(run.accuracy);
    out.runs.push_back(std::move(run));
  }
  out.summary = summarize(accuracies);
  return out;
}

// --- sweeps -------------------------------------------------------------------

struct SweepRow {
  std::map<std::string, std::string> key;
  std::optional<SummaryStats> stats;
  std::map<std::string, double> extra;
  std::string error;  // non-empty for failed cells
};

namespace detail {
inline bool numeric_less(const std::string& a, const std::string& b) {
  double x = 0, y = 0;
  const bool na = std::from_chars(a.data(), a.data() + a.size(), x).ec == std::errc();
  const bool nb = std::from_chars(b.data(), b.data() + b.size(), y).ec == std::errc();
  if (na && nb && x != y) return x < y;
  return a < b;
}
}  // namespace detail

struct SweepTable {
  std::string sweep;
  std::vector<std::string> key_columns;
  std::vector<SweepRow> rows;

  // Rows ordered by their key, so the table does not depend on grid order.
  void sort_rows() {
    std::sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) {
      for (const auto& k : key_columns) {
        const auto& x = a.key.at(k);
        const auto& y = b.key.at(k);
        if (x != y) return detail::numeric_less(x, y);
      }
      return false;
    });
  }

  std::vector<std::string> extra_columns() const {
    std::set<std::string> s;
    for (const auto& r : rows)
      for (const auto& [k, v] : r.extra) s.insert(k);
    return {s.begin(), s.end()};
  }

  std::string to_csv() const {
    std::string out;
    for (const auto& k : key_columns) out += k + ",";
    out += "status,mean,std,n,ci_half_width";
    const auto extras = extra_columns();
    for (const auto& e : extras) out += "," + e;
    out += ",error\n";
    for (const auto& r : rows) {
      for (const auto& k : key_columns) out += csv_field(r.key.at(k)) + ",";
      if (r.stats) {
        out += "ok," + format_double(r.stats->mean) + "," + format_double(r.stats->std) + "," +
               std::to_string(r.stats->n) + "," + (r.stats->ci_half_width ? format_double(*r.stats->ci_half_width) : "");
      } else {
        out += "failed,,,,";
      }
      for (const auto& e : extras) {
        out += ",";
        if (auto it = r.extra.find(e); it != r.extra.end()) out += format_double(it->second);
      }
      out += "," + csv_field(r.error) + "\n";
    }
    return out;
  }

  json to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
      json row = {{"key", r.key}, {"extra", r.extra}};
      row["stats"] = r.stats ? summary_json(*r.stats) : json(nullptr);
      row["error"] = r.error.empty() ? json(nullptr) : json(r.error);
      rs.push_back(row);
    }
    return {{"sweep", sweep}, {"key_columns", key_columns}, {"rows", rs}};
  }

  static std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
};

namespace detail {
inline SweepRow run_cell(const ExperimentData& data, const ExperimentSettings& s, std::map<std::string, std::string> key) {
  SweepRow row{std::move(key), std::nullopt, {}, {}};
  try {
    row.stats = run_experiment(data, s).summary;
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

inline std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : "+") + id;
  return out;
}
}  // namespace detail

inline SweepTable observer_combination_sweep(const ExperimentData& data, const ExperimentSettings& base,
                                             const std::vector<std::vector<std::string>>& combinations) {
  SweepTable t{"observers", {"observers"}, {}};
  for (const auto& combo : combinations) {
    ExperimentSettings s = base;
    s.observers = data.observers->canonical_subset(combo);
    t.rows.push_back(detail::run_cell(data, s, {{"observers", detail::join_ids(s.observers)}}));
  }
  t.sort_rows();
  return t;
}

// Total number of sentences with at least `min_words` words across documents.
inline std::size_t surviving_sentence_count(const std::vector<RawDocument>& documents, std::size_t min_words) {
  std::size_t n = 0;
  for (const auto& d : documents) n += filter_min_words(document_sentences(d), min_words).size();
  return n;
}

// The configured (min_words, max_sentences) cell is always included.
inline SweepTable prototype_param_sweep(const ExperimentData& data, const ExperimentSettings& base,
                                        std::vector<std::size_t> min_words_grid,
                                        std::vector<std::size_t> max_sentences_grid) {
  if (min_words_grid.empty() || max_sentences_grid.empty()) throw ConfigError("prototype sweep grids must be non-empty");
  for (auto* grid : {&min_words_grid, &max_sentences_grid}) {
    const std::size_t def = grid == &min_words_grid ? base.prototypes.min_words : base.prototypes.max_sentences;
    grid->push_back(def);
    std::sort(grid->begin(), grid->end());
    grid->erase(std::unique(grid->begin(), grid->end()), grid->end());
  }
  SweepTable t{"prototypes", {"min_words", "max_sentences"}, {}};
  for (std::size_t mw : min_words_grid) {
    const double surviving = static_cast<double>(surviving_sentence_count(data.documents, mw));
    for (std::size_t ms : max_sentences_grid) {
      ExperimentSettings s = base;
      s.prototypes.min_words = mw;
      s.prototypes.max_sentences = ms;
      auto row = detail::run_cell(data, s, {{"min_words", std::to_string(mw)}, {"max_sentences", std::to_string(ms)}});
      row.extra["surviving_sentences"] = surviving;
      t.rows.push_back(std::move(row));
    }
  }
  t.sort_rows();
  return t;
}

inline SweepTable representation_mode_sweep(const ExperimentData& data, const ExperimentSettings& base) {
  SweepTable t{"modes", {"mode"}, {}};
  for (auto mode : {PrototypeMode::label_only, PrototypeMode::paragraph, PrototypeMode::sentences}) {
    ExperimentSettings s = base;
    s.prototypes.mode = mode;
    t.rows.push_back(detail::run_cell(data, s, {{"mode", std::string(to_string(mode))}}));
  }
  t.sort_rows();
  return t;
}

struct NamedProvider {
  std::string name;
  std::shared_ptr<const EmbeddingProvider> provider;
};

// Every (preprocessing, joint-space) pair; each provider is wrapped in one
// shared cache so no text is embedded twice by the same provider.
inline SweepTable embedder_sweep(const ExperimentData& data, const ExperimentSettings& base,
                                 const std::vector<NamedProvider>& providers,
                                 std::vector<std::pair<std::string, std::string>> pairs = {}) {
  if (providers.empty()) throw ConfigError("embedder sweep needs at least one provider");
  std::map<std::string, std::shared_ptr<const EmbeddingProvider>> cached;
  for (const auto& p : providers) {
    if (!p.provider) throw ConfigError("embedder '" + p.name + "' is not set");
    if (!cached.emplace(p.name, std::make_shared<CachingProvider>(p.provider)).second)
      throw ConfigError("duplicate embedder name '" + p.name + "'");
  }
  if (pairs.empty())
    for (const auto& a : providers)
      for (const auto& b : providers) pairs.emplace_back(a.name, b.name);
  SweepTable t{"embedders", {"preprocessing", "joint_space"}, {}};
  for (const auto& [pre, joint] : pairs) {
    if (!cached.contains(pre) || !cached.contains(joint))
      throw ConfigError("embedder sweep pair references an unknown provider: " + pre + "/" + joint);
    ExperimentSettings s = base;
    s.selection = cached.at(pre);
    s.space = cached.at(joint);
    t.rows.push_back(detail::run_cell(data, s, {{"preprocessing", pre}, {"joint_space", joint}}));
  }
  t.sort_rows();
  return t;
}

// Pearson r between each per-epoch caption score and the per-epoch accuracy.
inline std::map<std::string, double> score_accuracy_correlation(const std::vector<EpochRecord>& history,
                                                                const std::vector<double>& accuracies) {
  if (history.size() != accuracies.size())
    throw DataError("score_accuracy_correlation: " + std::to_string(history.size()) + " epochs vs " +
                    std::to_string(accuracies.size()) + " accuracies");
  std::vector<double> b3, b4, meteor;
  bool has_meteor = !history.empty();
  for (const auto& e : history) {
    b3.push_back(e.bleu3);
    b4.push_back(e.bleu4);
    if (e.meteor)
      meteor.push_back(*e.meteor);
    else
      has_meteor = false;
  }
  std::map<std::string, double> r{{"bleu3", pearson_correlation(b3, accuracies)},
                                  {"bleu4", pearson_correlation(b4, accuracies)}};
  if (has_meteor) r["meteor"] = pearson_correlation(meteor, accuracies);
  return r;
}

}  // namespace zsar
