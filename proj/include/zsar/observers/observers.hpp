#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "zsar/caption/features.hpp"
#include "zsar/caption/model.hpp"
#include "zsar/core/io.hpp"
#include "zsar/text/sentence.hpp"

namespace zsar {

enum class ObserverKind { file_backed, toy_transformer, toy_bmt };

inline std::string_view to_string(ObserverKind k) {
  switch (k) {
    case ObserverKind::file_backed: return "file_backed";
    case ObserverKind::toy_transformer: return "toy_transformer";
    case ObserverKind::toy_bmt: return "toy_bmt";
  }
  return "?";
}

inline ObserverKind parse_observer_kind(std::string_view s) {
  if (s == "file_backed") return ObserverKind::file_backed;
  if (s == "toy_transformer") return ObserverKind::toy_transformer;
  if (s == "toy_bmt") return ObserverKind::toy_bmt;
  throw ConfigError("unknown observer kind '" + std::string(s) + "' (expected file_backed|toy_transformer|toy_bmt)");
}

struct ObserverSpec {
  std::string observer_id;
  ObserverKind kind = ObserverKind::file_backed;
  fs::path source;  // caption JSON-lines file or captioner model file
};

// Caption store line: {"video_id", "observer_id", "sentence"}.
inline json caption_record(const std::string& video_id, const std::string& observer_id, const Sentence& s) {
  return {{"video_id", video_id}, {"observer_id", observer_id}, {"sentence", s.text()}};
}

// Captions of one observer read from a store. Lines tagged with another
// observer id are ignored; an untagged store is taken to belong entirely to
// this observer.
inline std::map<std::string, Sentence> load_caption_store(const fs::path& path, const std::string& observer_id) {
  std::map<std::string, Sentence> out;
  for (const auto& r : read_jsonl(path)) {
    if (r.contains("observer_id") && r.at("observer_id").get<std::string>() != observer_id) continue;
    const auto id = required<std::string>(r, "video_id", path.string());
    Sentence s(trim(required<std::string>(r, "sentence", path.string())), SentenceOrigin::observer);
    if (s.empty()) throw DataError(path.string() + ": empty sentence for video '" + id + "' (observer " + observer_id + ")");
    if (!out.emplace(id, std::move(s)).second)
      throw DataError(path.string() + ": duplicate caption for video '" + id + "' (observer " + observer_id + ")");
  }
  return out;
}

using FeatureIndex = std::map<std::string, VideoFeatures>;

class Observer {
 public:
  virtual ~Observer() = default;
  virtual const ObserverSpec& spec() const = 0;
  virtual Sentence describe(const std::string& video_id) const = 0;
};

class FileBackedObserver final : public Observer {
 public:
  explicit FileBackedObserver(ObserverSpec spec)
      : spec_(std::move(spec)), captions_(load_caption_store(spec_.source, spec_.observer_id)) {}

  const ObserverSpec& spec() const override { return spec_; }

  Sentence describe(const std::string& video_id) const override {
    auto it = captions_.find(video_id);
    if (it == captions_.end())
      throw DataError("video '" + video_id + "' missing from observer '" + spec_.observer_id + "' (" +
                      spec_.source.string() + ")");
    return it->second;
  }

 private:
  ObserverSpec spec_;
  std::map<std::string, Sentence> captions_;
};

class ModelObserver final : public Observer {
 public:
  ModelObserver(ObserverSpec spec, Captioner model, std::shared_ptr<const FeatureIndex> features, std::size_t max_len)
      : spec_(std::move(spec)), model_(std::move(model)), features_(std::move(features)), max_len_(max_len) {
    const auto want = spec_.kind == ObserverKind::toy_bmt ? Architecture::bmt : Architecture::transformer;
    if (model_.config().architecture != want)
      throw ConfigError("observer '" + spec_.observer_id + "' is " + std::string(to_string(spec_.kind)) +
                        " but its model is " + std::string(to_string(model_.config().architecture)));
  }

  const ObserverSpec& spec() const override { return spec_; }
  const Captioner& model() const noexcept { return model_; }

  Sentence describe(const std::string& video_id) const override {
    auto it = features_->find(video_id);
    if (it == features_->end())
      throw DataError("video '" + video_id + "' has no features for observer '" + spec_.observer_id + "'");
    Sentence s = model_.generate_caption(it->second, max_len_);
    if (s.empty()) throw DataError("observer '" + spec_.observer_id + "' produced an empty caption for '" + video_id + "'");
    return s;
  }

 private:
  ObserverSpec spec_;
  Captioner model_;
  std::shared_ptr<const FeatureIndex> features_;
  std::size_t max_len_;
};

struct FusedDescription {
  std::string video_id;
  Sentence sentence;
  std::vector<std::pair<std::string, Sentence>> parts;
};

// Space-joined concatenation of the parts, in the given order.
inline FusedDescription fuse(const std::string& video_id, const std::vector<std::pair<std::string, Sentence>>& parts) {
  if (parts.empty()) throw DataError("fuse: no observer sentences for video '" + video_id + "'");
  std::string text;
  for (const auto& [id, s] : parts) {
    if (s.empty()) throw DataError("fuse: observer '" + id + "' gave an empty sentence for '" + video_id + "'");
    if (!text.empty()) text += ' ';
    text += s.text();
  }
  return {video_id, Sentence(std::move(text), SentenceOrigin::fused), parts};
}

inline json fused_record(const FusedDescription& f) {
  json parts = json::array();
  for (const auto& [id, s] : f.parts) parts.push_back({{"observer_id", id}, {"sentence", s.text()}});
  return {{"video_id", f.video_id}, {"sentence", f.sentence.text()}, {"parts", parts}};
}

inline std::vector<FusedDescription> load_fused(const fs::path& path) {
  std::vector<FusedDescription> out;
  for (const auto& r : read_jsonl(path)) {
    FusedDescription f;
    f.video_id = required<std::string>(r, "video_id", path.string());
    f.sentence = Sentence(required<std::string>(r, "sentence", path.string()), SentenceOrigin::fused);
    if (r.contains("parts"))
      for (const auto& p : r.at("parts"))
        f.parts.emplace_back(required<std::string>(p, "observer_id", path.string()),
                             Sentence(required<std::string>(p, "sentence", path.string()), SentenceOrigin::observer));
    if (f.sentence.empty()) throw DataError(path.string() + ": empty fused sentence for '" + f.video_id + "'");
    out.push_back(std::move(f));
  }
  return out;
}

// All configured observers of a run. Sources are opened on first use, and
// every open and every describe call is logged.
class ObserverBank {
 public:
  ObserverBank(std::vector<ObserverSpec> specs, std::shared_ptr<const FeatureIndex> features = nullptr,
               std::size_t max_len = 30)
      : features_(std::move(features)), max_len_(max_len) {
    for (auto& s : specs) {
      if (s.observer_id.empty()) throw ConfigError("observer with an empty id");
      const std::string id = s.observer_id;
      if (!specs_.emplace(id, std::move(s)).second) throw ConfigError("duplicate observer id '" + id + "'");
    }
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : specs_) out.push_back(id);
    return out;
  }

  const ObserverSpec& spec(const std::string& id) const {
    auto it = specs_.find(id);
    if (it == specs_.end()) throw ConfigError("unknown observer id '" + id + "'");
    return it->second;
  }

  Sentence describe(const std::string& video_id, const std::string& observer_id) const {
    const Observer& ob = open(observer_id);
    {
      std::lock_guard lock(mutex_);
      access_log_.push_back(observer_id);
    }
    return ob.describe(video_id);
  }

  // Canonical (ascending id) order, duplicates removed; unknown ids are an error.
  std::vector<std::string> canonical_subset(const std::vector<std::string>& subset) const {
    if (subset.empty()) throw ConfigError("observer subset is empty");
    std::set<std::string> ids(subset.begin(), subset.end());
    for (const auto& id : ids) spec(id);
    return {ids.begin(), ids.end()};
  }

  FusedDescription fused(const std::string& video_id, const std::vector<std::string>& subset) const {
    std::vector<std::pair<std::string, Sentence>> parts;
    for (const auto& id : canonical_subset(subset)) parts.emplace_back(id, describe(video_id, id));
    return fuse(video_id, parts);
  }

  std::vector<FusedDescription> observer_subset(const std::vector<std::string>& video_ids,
                                                const std::vector<std::string>& subset) const {
    std::vector<FusedDescription> out;
    out.reserve(video_ids.size());
    for (const auto& v : video_ids) out.push_back(fused(v, subset));
    return out;
  }

  // Observers whose sources have been opened, and one entry per describe call.
  std::set<std::string> opened() const {
    std::lock_guard lock(mutex_);
    std::set<std::string> out;
    for (const auto& [id, ob] : loaded_) out.insert(id);
    return out;
  }
  std::vector<std::string> access_log() const {
    std::lock_guard lock(mutex_);
    return access_log_;
  }

 private:
  const Observer& open(const std::string& id) const {
    const ObserverSpec& s = spec(id);
    std::lock_guard lock(mutex_);
    auto it = loaded_.find(id);
    if (it != loaded_.end()) return *it->second;
    std::unique_ptr<Observer> ob;
    if (s.kind == ObserverKind::file_backed) {
      ob = std::make_unique<FileBackedObserver>(s);
    } else {
      if (!features_) throw ConfigError("observer '" + id + "' needs video features, none configured");
      ob = std::make_unique<ModelObserver>(s, Captioner::load(s.source), features_, max_len_);
    }
    return *loaded_.emplace(id, std::move(ob)).first->second;
  }

  std::map<std::string, ObserverSpec> specs_;
  std::shared_ptr<const FeatureIndex> features_;
  std::size_t max_len_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::unique_ptr<Observer>> loaded_;
  mutable std::vector<std::string> access_log_;
};

}  // namespace zsar
