#pragma once

#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "zsar/classify/classifier.hpp"
#include "zsar/core/checksum.hpp"
#include "zsar/core/io.hpp"
#include "zsar/eval/experiment.hpp"
#include "zsar/pipeline/config.hpp"

namespace zsar {

inline constexpr const char* kToolVersion = "0.1.0";

// video id -> class label, from {"video_id", "class"} lines.
inline std::map<std::string, std::string> load_labels(const fs::path& path) {
  std::map<std::string, std::string> out;
  for (const auto& r : read_jsonl(path)) {
    const auto v = required<std::string>(r, "video_id", path.string());
    if (!out.emplace(v, required<std::string>(r, "class", path.string())).second)
      throw DataError(path.string() + ": duplicate label for video '" + v + "'");
  }
  if (out.empty()) throw DataError(path.string() + ": no labels");
  return out;
}

// Deterministic derangement of class labels: each label moves `shift`
// places along the sorted class list.
inline std::map<std::string, std::string> label_derangement(std::vector<std::string> classes, std::uint64_t seed) {
  std::sort(classes.begin(), classes.end());
  std::map<std::string, std::string> out;
  if (classes.size() < 2) throw ConfigError("label shuffling needs at least two classes");
  const std::size_t shift = 1 + static_cast<std::size_t>(seed % (classes.size() - 1));
  for (std::size_t i = 0; i < classes.size(); ++i) out[classes[i]] = classes[(i + shift) % classes.size()];
  return out;
}

inline void relabel_prototypes(std::vector<PrototypeSet>& sets, const std::map<std::string, std::string>& mapping) {
  for (auto& s : sets)
    if (auto it = mapping.find(s.class_label); it != mapping.end()) s.class_label = it->second;
  std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.class_label < b.class_label; });
}

// Everything a run or a sweep needs, loaded from a config.
struct PipelineContext {
  PipelineConfig config;
  std::shared_ptr<FeatureIndex> features;
  std::unique_ptr<ObserverBank> observers;
  ExperimentData data;
  ExperimentSettings settings;
};

inline std::unique_ptr<PipelineContext> open_pipeline(const PipelineConfig& config) {
  if (const auto errors = validate_config(config); !errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem(s)):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  auto ctx = std::make_unique<PipelineContext>();
  ctx->config = config;
  if (auto fdir = config.path("features")) ctx->features = std::make_shared<FeatureIndex>(load_feature_dir(*fdir));
  ctx->observers = std::make_unique<ObserverBank>(observer_specs(config), ctx->features, config.caption_max_len());
  ctx->data.documents = load_descriptions(*config.path("descriptions"));
  ctx->data.truth = load_labels(*config.path("labels"));
  ctx->data.observers = ctx->observers.get();
  auto& s = ctx->settings;
  s.observers = ctx->observers->canonical_subset(active_observers(config));
  s.prototypes = prototype_config(config);
  s.space = std::make_shared<CachingProvider>(make_provider(embedder_spec(config, "space"), &config));
  const auto sel = embedder_spec(config, "selection");
  s.selection = sel == embedder_spec(config, "space") ? s.space
                                                      : std::make_shared<CachingProvider>(make_provider(sel, &config));
  s.classify = classify_options(config);
  s.protocol = protocol_of(config);
  return ctx;
}

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string config_hash;
  std::vector<ArtifactRecord> artifacts;
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  std::optional<std::string> created;  // from SOURCE_DATE_EPOCH when set

  json to_json() const {
    json arts = json::array();
    for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    return {{"tool", "zsar"},
            {"tool_version", tool_version},
            {"config_hash", config_hash},
            {"seed", seed},
            {"created", created ? json(*created) : json(nullptr)},
            {"artifacts", arts}};
  }
};

// Writes artifacts below one directory and remembers each file written.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const noexcept { return root_; }

  void write(const std::string& relative, std::string_view content) {
    write_text_file(root_ / relative, content);
    written_.insert(relative);
  }
  void write_json(const std::string& relative, const json& j) { write(relative, j.dump(2) + "\n"); }
  void write_jsonl(const std::string& relative, const std::vector<json>& rows) { write(relative, to_jsonl(rows)); }

  std::vector<ArtifactRecord> records() const {
    std::vector<ArtifactRecord> out;
    for (const auto& rel : written_)
      out.push_back({rel, sha256_file(root_ / rel), fs::file_size(root_ / rel)});
    return out;
  }

 private:
  fs::path root_;
  std::set<std::string> written_;
};

inline std::optional<std::string> manifest_timestamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (!epoch || !*epoch) return std::nullopt;
  return std::string(epoch);
}

// Runs `fn`, prefixing any failure with the stage name.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    rethrow_with_context(e, "stage '" + stage + "' failed: ");
  } catch (const json::exception& e) {
    throw DataError("stage '" + stage + "' failed: " + e.what());
  }
}

inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

inline std::string confusion_csv(const ConfusionMatrix& m) {
  std::string out = "true\\predicted";
  for (const auto& c : m.classes) out += "," + SweepTable::csv_field(c);
  out += "\n";
  for (std::size_t r = 0; r < m.classes.size(); ++r) {
    out += SweepTable::csv_field(m.classes[r]);
    for (auto v : m.counts[r]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

// prep -> describe -> embed -> classify -> evaluate, then the manifest.
inline RunManifest run_pipeline(const PipelineConfig& config) {
  auto ctx = run_stage("config", [&] { return open_pipeline(config); });
  const auto& data = ctx->data;
  auto& s = ctx->settings;
  ArtifactWriter out(config.output_dir());
  fs::create_directories(out.root());
  fs::remove(out.root() / "manifest.json");

  std::vector<std::string> all_classes;
  for (const auto& d : data.documents) all_classes.push_back(d.class_label);
  std::vector<Split> splits;
  std::set<std::string> needed;
  std::vector<PrototypeSet> prototypes;
  run_stage("prep", [&] {
    splits = protocol_splits(all_classes, s.protocol);
    for (auto& sp : splits) {
      sp.unseen = resolve_classes(sp.unseen, data.documents);
      needed.insert(sp.unseen.begin(), sp.unseen.end());
    }
    prototypes = build_prototype_sets(data.documents, needed, s.prototypes, *s.selection);
    if (config.raw.value("shuffle_prototype_labels", false))
      relabel_prototypes(prototypes, label_derangement({needed.begin(), needed.end()}, config.seed()));
    out.write("prototypes.jsonl", format_prototype_store(prototypes, {s.prototypes.min_words, s.prototypes.max_sentences,
                                                                     s.selection->id()}));
  });

  std::vector<FusedDescription> fused;
  run_stage("describe", [&] {
    std::vector<std::string> videos;
    for (const auto& [v, c] : data.truth)
      if (needed.contains(c)) videos.push_back(v);
    fused = ctx->observers->observer_subset(videos, s.observers);
    std::vector<json> rows;
    for (const auto& f : fused) rows.push_back(fused_record(f));
    out.write_jsonl("fused.jsonl", rows);
    for (const auto& id : s.observers) {
      std::vector<json> caps;
      for (const auto& f : fused)
        for (const auto& [ob, sentence] : f.parts)
          if (ob == id) caps.push_back(caption_record(f.video_id, ob, sentence));
      out.write_jsonl("captions/" + id + ".jsonl", caps);
    }
  });

  JointSpace space;
  std::map<std::string, EmbeddingVector> video_vectors;
  run_stage("embed", [&] {
    space = build_joint_space(prototypes, *s.space);
    out.write("space.jsonl", format_joint_space(space));
    std::vector<json> rows;
    for (const auto& f : fused) {
      EmbeddingVector v;
      try {
        v = embed_fused(f, *s.space, s.classify.fusion);
      } catch (const Error& e) {
        rethrow_with_context(e, "video '" + f.video_id + "': ");
      }
      rows.push_back({{"video_id", f.video_id}, {"embedder_id", v.embedder_id}, {"vector", v.values}});
      video_vectors.emplace(f.video_id, std::move(v));
    }
    out.write_jsonl("video_embeddings.jsonl", rows);
  });

  std::vector<RunResult> runs;
  run_stage("classify", [&] {
    for (std::size_t r = 0; r < splits.size(); ++r) {
      RunResult run{splits[r], {}, 0.0};
      const JointSpace restricted = space.restrict_to(splits[r].unseen);
      const std::set<std::string> unseen(splits[r].unseen.begin(), splits[r].unseen.end());
      std::vector<json> rows;
      for (const auto& [v, c] : data.truth) {
        if (!unseen.contains(c)) continue;
        run.results.push_back(classify_vector(v, video_vectors.at(v), restricted, s.classify.aggregation));
        rows.push_back(result_record(run.results.back()));
      }
      if (run.results.empty()) throw DataError("run " + std::to_string(r) + " has no test videos");
      char name[32];
      std::snprintf(name, sizeof name, "results/run_%03zu.jsonl", r);
      out.write_jsonl(name, rows);
      runs.push_back(std::move(run));
    }
  });

  run_stage("evaluate", [&] {
    std::vector<double> accs;
    json run_rows = json::array();
    std::string csv = "run,seed,n_unseen,n_videos,accuracy\n";
    std::vector<ClassificationResult> all;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      runs[r].accuracy = accuracy(runs[r].results, data.truth);
      accs.push_back(runs[r].accuracy);
      run_rows.push_back({{"run", r},
                          {"seed", runs[r].split.seed},
                          {"unseen", runs[r].split.unseen},
                          {"n_videos", runs[r].results.size()},
                          {"accuracy", runs[r].accuracy}});
      csv += std::to_string(r) + "," + std::to_string(runs[r].split.seed) + "," +
             std::to_string(runs[r].split.unseen.size()) + "," + std::to_string(runs[r].results.size()) + "," +
             format_double(runs[r].accuracy) + "\n";
      all.insert(all.end(), runs[r].results.begin(), runs[r].results.end());
    }
    const SummaryStats summary = summarize(accs);
    const ConfusionMatrix cm = confusion_matrix(all, data.truth);
    json cmj = {{"classes", cm.classes}, {"counts", cm.counts}};
    out.write_json("evaluation.json", {{"dataset", config.dataset()},
                                       {"seed", config.seed()},
                                       {"protocol", s.protocol.to_json()},
                                       {"observers", s.observers},
                                       {"prototype_mode", std::string(to_string(s.prototypes.mode))},
                                       {"embedders", {{"selection", s.selection->id()}, {"space", s.space->id()}}},
                                       {"runs", run_rows},
                                       {"summary", summary_json(summary)},
                                       {"confusion", cmj}});
    out.write("accuracy.csv", csv);
    out.write("confusion.csv", confusion_csv(cm));
  });

  RunManifest manifest;
  manifest.config_hash = sha256_hex(config.canonical());
  manifest.seed = config.seed();
  manifest.created = manifest_timestamp();
  manifest.artifacts = out.records();
  write_text_file(out.root() / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

}  // namespace zsar
