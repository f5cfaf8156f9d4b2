#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zsar/core/io.hpp"
#include "zsar/embed/embedding.hpp"
#include "zsar/text/segmentation.hpp"
#include "zsar/text/sentence.hpp"

namespace zsar {

enum class PrototypeMode { sentences, paragraph, label_only };

inline std::string_view to_string(PrototypeMode m) {
  switch (m) {
    case PrototypeMode::sentences: return "sentences";
    case PrototypeMode::paragraph: return "paragraph";
    case PrototypeMode::label_only: return "label";
  }
  return "?";
}

inline PrototypeMode parse_prototype_mode(std::string_view s) {
  if (s == "sentences") return PrototypeMode::sentences;
  if (s == "paragraph") return PrototypeMode::paragraph;
  if (s == "label" || s == "label_only") return PrototypeMode::label_only;
  throw ConfigError("unknown prototype mode '" + std::string(s) +
                    "' (expected sentences|paragraph|label)");
}

struct PrototypeConfig {
  PrototypeMode mode = PrototypeMode::sentences;
  std::size_t min_words = 10;
  std::size_t max_sentences = 10;

  void validate() const {
    if (min_words < 1) throw ConfigError("min_words must be >= 1");
    if (max_sentences < 1) throw ConfigError("max_sentences must be >= 1");
  }
};

struct PrototypeSet {
  std::string class_label;
  PrototypeMode mode = PrototypeMode::sentences;
  std::vector<Sentence> prototypes;
  // Aligned with prototypes; empty optionals for modes that do not rank.
  std::vector<std::optional<double>> selection_scores;
};

inline std::vector<Sentence> filter_min_words(const std::vector<Sentence>& sentences,
                                              std::size_t min_words) {
  if (min_words < 1) throw ConfigError("min_words must be >= 1");
  std::vector<Sentence> out;
  for (const auto& s : sentences)
    if (s.word_count() >= min_words) out.push_back(s);
  return out;
}

// Split, then expand contractions, in document order.
inline std::vector<Sentence> document_sentences(const RawDocument& doc) {
  std::vector<Sentence> out;
  for (const auto& s : split_sentences(doc)) out.push_back(expand_contractions(s));
  return out;
}

// Keeps the max_sentences filtered sentences closest (cosine) to the
// normalised class label; ties keep document order.
inline PrototypeSet select_prototypes(const std::string& label, const std::vector<Sentence>& sentences,
                                      const EmbeddingProvider& provider, std::size_t min_words,
                                      std::size_t max_sentences) {
  if (max_sentences < 1) throw ConfigError("max_sentences must be >= 1");
  const auto kept = filter_min_words(sentences, min_words);
  if (kept.empty())
    throw ConfigError("class '" + label + "': no sentence survives min_words=" +
                      std::to_string(min_words) + " (max_sentences=" +
                      std::to_string(max_sentences) + ", " + std::to_string(sentences.size()) +
                      " candidate sentences)");
  const EmbeddingVector label_vec = embed(normalize_label(label), provider);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    scored.emplace_back(cosine_similarity(embed(kept[i], provider), label_vec), i);
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  PrototypeSet set{label, PrototypeMode::sentences, {}, {}};
  for (std::size_t r = 0; r < scored.size() && r < max_sentences; ++r) {
    set.prototypes.push_back(kept[scored[r].second]);
    set.selection_scores.emplace_back(scored[r].first);
  }
  return set;
}

inline PrototypeSet build_paragraph_prototype(const std::string& label,
                                              const std::vector<Sentence>& sentences) {
  if (sentences.empty())
    throw DataError("class '" + label + "': cannot build a paragraph from zero sentences");
  std::string text;
  for (const auto& s : sentences) {
    if (!text.empty()) text += ' ';
    text += s.text();
  }
  return {label, PrototypeMode::paragraph, {Sentence(std::move(text), SentenceOrigin::document)}, {std::nullopt}};
}

inline PrototypeSet build_label_prototype(const std::string& label) {
  const std::string text = normalize_label(label);
  if (text.empty()) throw DataError("empty class label");
  return {label, PrototypeMode::label_only, {Sentence(text, SentenceOrigin::document)}, {std::nullopt}};
}

// One UTF-8 file per class: <dir>/<class_label>.txt, sorted by label.
inline std::vector<RawDocument> load_descriptions(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("descriptions directory not found: " + dir.string());
  std::vector<RawDocument> docs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    RawDocument doc{entry.path().stem().string(), read_text_file(entry.path()),
                    entry.path().filename().string()};
    doc.validate();
    docs.push_back(std::move(doc));
  }
  std::sort(docs.begin(), docs.end(),
            [](const RawDocument& a, const RawDocument& b) { return a.class_label < b.class_label; });
  if (docs.empty()) throw DataError("no .txt class descriptions in " + dir.string());
  return docs;
}

// Builds the prototype set for one class in any of the three modes. The
// paragraph mode joins exactly the sentences the sentence mode would select.
inline PrototypeSet build_prototypes(const std::string& label, const std::vector<Sentence>& sentences,
                                     const PrototypeConfig& cfg, const EmbeddingProvider& selection) {
  cfg.validate();
  switch (cfg.mode) {
    case PrototypeMode::label_only: return build_label_prototype(label);
    case PrototypeMode::paragraph:
      return build_paragraph_prototype(
          label, select_prototypes(label, sentences, selection, cfg.min_words, cfg.max_sentences).prototypes);
    case PrototypeMode::sentences:
      return select_prototypes(label, sentences, selection, cfg.min_words, cfg.max_sentences);
  }
  throw ConfigError("unreachable prototype mode");
}

// --- JSON-lines prototype store -------------------------------------------
// {class, mode, prototypes:[{text, score}], config:{min_words, max_sentences, embedder_id}}

struct PrototypeStoreConfig {
  std::size_t min_words = 10;
  std::size_t max_sentences = 10;
  std::string embedder_id;
};

inline json prototype_record(const PrototypeSet& set, const PrototypeStoreConfig& cfg) {
  json protos = json::array();
  for (std::size_t i = 0; i < set.prototypes.size(); ++i) {
    json score = nullptr;
    if (i < set.selection_scores.size() && set.selection_scores[i]) score = *set.selection_scores[i];
    protos.push_back({{"text", set.prototypes[i].text()}, {"score", score}});
  }
  return {{"class", set.class_label},
          {"mode", std::string(to_string(set.mode))},
          {"prototypes", protos},
          {"config",
           {{"min_words", cfg.min_words}, {"max_sentences", cfg.max_sentences}, {"embedder_id", cfg.embedder_id}}}};
}

inline std::string format_prototype_store(const std::vector<PrototypeSet>& sets,
                                          const PrototypeStoreConfig& cfg) {
  std::vector<json> records;
  for (const auto& s : sets) records.push_back(prototype_record(s, cfg));
  return to_jsonl(records);
}

inline std::vector<PrototypeSet> parse_prototype_records(const std::vector<json>& records,
                                                         std::string_view context) {
  std::vector<PrototypeSet> sets;
  for (const auto& r : records) {
    PrototypeSet s;
    s.class_label = required<std::string>(r, "class", context);
    s.mode = parse_prototype_mode(required<std::string>(r, "mode", context));
    for (const auto& p : required<json>(r, "prototypes", context)) {
      s.prototypes.emplace_back(required<std::string>(p, "text", context), SentenceOrigin::document);
      if (p.contains("score") && p.at("score").is_number())
        s.selection_scores.emplace_back(p.at("score").get<double>());
      else
        s.selection_scores.emplace_back(std::nullopt);
    }
    if (s.prototypes.empty())
      throw DataError(std::string(context) + ": class '" + s.class_label + "' has no prototypes");
    sets.push_back(std::move(s));
  }
  return sets;
}

inline std::vector<PrototypeSet> load_prototype_store(const fs::path& path) {
  return parse_prototype_records(read_jsonl(path), path.string());
}

}  // namespace zsar
