#pragma once

#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zsar/classify/classifier.hpp"
#include "zsar/core/io.hpp"
#include "zsar/embed/providers.hpp"
#include "zsar/embed/sentence_encoder.hpp"
#include "zsar/eval/protocol.hpp"
#include "zsar/observers/observers.hpp"
#include "zsar/text/prototypes.hpp"

namespace zsar {

// Applies "a.b.c=value" to a JSON object. The value is parsed as JSON when
// possible and kept as a string otherwise.
inline void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key has an empty component: '" + key + "'");
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

struct PipelineConfig {
  json raw;           // after overrides
  fs::path root;      // base for relative paths
  fs::path config_path;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : root / path;
  }

  std::string dataset() const { return raw.value("dataset", std::string("dataset")); }
  std::uint64_t seed() const { return raw.value("seed", std::uint64_t{0}); }

  std::optional<fs::path> path(const std::string& field) const {
    if (!raw.contains("paths") || !raw.at("paths").contains(field)) return std::nullopt;
    const auto& v = raw.at("paths").at(field);
    if (!v.is_string()) return std::nullopt;
    return resolve(v.get<std::string>());
  }

  fs::path output_dir() const {
    auto p = path("output");
    if (!p) throw ConfigError("config field 'paths.output' is required");
    return *p;
  }

  std::size_t caption_max_len() const { return raw.value("caption_max_len", std::size_t{30}); }

  // Canonical serialisation used for hashing.
  std::string canonical() const { return raw.dump(); }
};

// Path root: the config's "data_root" (relative to the config file), else
// ZSAR_DATA_DIR, else the directory holding the config file.
inline PipelineConfig make_config(json raw, const fs::path& config_path) {
  PipelineConfig c;
  c.raw = std::move(raw);
  c.config_path = config_path;
  const fs::path dir = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
  if (c.raw.contains("data_root") && c.raw.at("data_root").is_string()) {
    const fs::path r(c.raw.at("data_root").get<std::string>());
    c.root = r.is_absolute() ? r : dir / r;
  } else if (const char* env = std::getenv("ZSAR_DATA_DIR"); env && *env) {
    c.root = env;
  } else {
    c.root = dir;
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  json raw = read_json_file(path);
  if (!raw.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  for (const auto& o : overrides) apply_override(raw, o);
  return make_config(std::move(raw), path);
}

// --- derived settings -------------------------------------------------------

inline std::vector<ObserverSpec> observer_specs(const PipelineConfig& c) {
  std::vector<ObserverSpec> specs;
  if (!c.raw.contains("observers")) return specs;
  for (const auto& o : c.raw.at("observers")) {
    ObserverSpec s;
    s.observer_id = required<std::string>(o, "id", "observers");
    s.kind = parse_observer_kind(o.value("kind", std::string("file_backed")));
    if (o.contains("source")) {
      s.source = c.resolve(o.at("source").get<std::string>());
    } else if (s.kind == ObserverKind::file_backed) {
      auto dir = c.path("captions");
      if (!dir) throw ConfigError("observer '" + s.observer_id + "' has no source and 'paths.captions' is not set");
      s.source = *dir / (s.observer_id + ".jsonl");
    } else {
      throw ConfigError("observer '" + s.observer_id + "' needs a model 'source'");
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

inline std::vector<std::string> active_observers(const PipelineConfig& c) {
  if (c.raw.contains("active_observers")) return c.raw.at("active_observers").get<std::vector<std::string>>();
  std::vector<std::string> ids;
  for (const auto& s : observer_specs(c)) ids.push_back(s.observer_id);
  return ids;
}

inline PrototypeConfig prototype_config(const PipelineConfig& c) {
  PrototypeConfig p;
  if (c.raw.contains("prototypes")) {
    const auto& j = c.raw.at("prototypes");
    p.mode = parse_prototype_mode(j.value("mode", std::string("sentences")));
    p.min_words = j.value("min_words", p.min_words);
    p.max_sentences = j.value("max_sentences", p.max_sentences);
  }
  p.validate();
  return p;
}

inline ClassifyOptions classify_options(const PipelineConfig& c) {
  ClassifyOptions o;
  if (c.raw.contains("classifier")) {
    const auto& j = c.raw.at("classifier");
    o.aggregation = parse_aggregation(j.value("aggregation", std::string("max")));
    o.fusion = parse_fusion_mode(j.value("fusion", std::string("concatenate")));
  }
  return o;
}

inline Protocol protocol_of(const PipelineConfig& c) {
  if (!c.raw.contains("protocol")) throw ConfigError("config field 'protocol' is required");
  const auto& p = c.raw.at("protocol");
  if (p.is_string()) return load_protocol(c.resolve(p.get<std::string>()));
  return parse_protocol(p, "protocol");
}

// Provider specs: "overlap[:dim]", "table:<name-or-path>", "toy:<model.json>".
inline std::shared_ptr<const EmbeddingProvider> make_provider(const std::string& spec, const PipelineConfig* c = nullptr) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto resolve = [&](const std::string& p) { return c ? c->resolve(p) : fs::path(p); };
  if (kind == "overlap") {
    std::size_t dim = 1024;
    if (!arg.empty()) dim = static_cast<std::size_t>(parse_double(arg, "overlap dimension"));
    return std::make_shared<WordOverlapProvider>(dim);
  }
  if (kind == "table") {
    if (arg.empty()) throw ConfigError("table provider needs a path or a name");
    fs::path p = resolve(arg);
    if (c && c->raw.contains("paths") && c->raw.at("paths").contains("vector_tables") &&
        c->raw.at("paths").at("vector_tables").contains(arg))
      p = c->resolve(c->raw.at("paths").at("vector_tables").at(arg).get<std::string>());
    return std::make_shared<VectorTableProvider>(VectorTableProvider::load(p));
  }
  if (kind == "toy") {
    if (arg.empty()) throw ConfigError("toy provider needs a model path");
    return std::make_shared<ToySentenceEncoder>(ToySentenceEncoder::load(resolve(arg)));
  }
  throw ConfigError("unknown embedder spec '" + spec + "' (expected overlap[:dim] | table:<path> | toy:<path>)");
}

inline std::string embedder_spec(const PipelineConfig& c, const std::string& role) {
  if (c.raw.contains("embedders") && c.raw.at("embedders").contains(role))
    return c.raw.at("embedders").at(role).get<std::string>();
  if (role == "selection") return embedder_spec(c, "space");
  return "overlap";
}

// Every problem found, not just the first.
inline std::vector<std::string> validate_config(const PipelineConfig& c) {
  std::vector<std::string> errors;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    } catch (const json::exception& e) {
      errors.emplace_back(std::string("malformed config: ") + e.what());
    }
  };
  auto require_path = [&](const std::string& field, bool dir) {
    check([&] {
      auto p = c.path(field);
      if (!p) {
        errors.push_back("paths." + field + ": missing");
        return;
      }
      if (dir ? !fs::is_directory(*p) : !fs::is_regular_file(*p))
        errors.push_back("paths." + field + ": not found: " + p->string());
    });
  };
  require_path("descriptions", true);
  require_path("labels", false);
  if (c.path("features")) require_path("features", true);
  if (c.raw.contains("paths") && c.raw.at("paths").contains("captions")) require_path("captions", true);
  check([&] {
    if (!c.path("output")) errors.emplace_back("paths.output: missing");
  });
  check([&] {
    if (c.raw.contains("paths") && c.raw.at("paths").contains("vector_tables"))
      for (const auto& [name, p] : c.raw.at("paths").at("vector_tables").items())
        if (!fs::is_regular_file(c.resolve(p.get<std::string>())))
          errors.push_back("paths.vector_tables." + name + ": not found: " + c.resolve(p.get<std::string>()).string());
  });

  std::set<std::string> known;
  check([&] {
    const auto specs = observer_specs(c);
    if (specs.empty()) errors.emplace_back("observers: at least one observer is required");
    bool needs_features = false;
    for (const auto& s : specs) {
      if (!known.insert(s.observer_id).second) errors.push_back("observers: duplicate id '" + s.observer_id + "'");
      if (!fs::is_regular_file(s.source))
        errors.push_back("observer '" + s.observer_id + "': source not found: " + s.source.string());
      needs_features = needs_features || s.kind != ObserverKind::file_backed;
    }
    if (needs_features && !c.path("features"))
      errors.emplace_back("paths.features: required by captioning-model observers");
  });
  check([&] {
    if (!c.raw.contains("active_observers")) return;
    const auto ids = c.raw.at("active_observers").get<std::vector<std::string>>();
    if (ids.empty()) errors.emplace_back("active_observers: empty");
    for (const auto& id : ids)
      if (!known.contains(id)) errors.push_back("active_observers: unknown observer id '" + id + "'");
  });
  check([&] { prototype_config(c); });
  check([&] { classify_options(c); });
  check([&] { protocol_of(c); });
  for (const char* role : {"selection", "space"})
    check([&] {
      const auto spec = embedder_spec(c, role);
      const auto kind = spec.substr(0, spec.find(':'));
      if (kind != "overlap" && kind != "table" && kind != "toy")
        errors.push_back(std::string("embedders.") + role + ": unknown embedder spec '" + spec + "'");
    });
  return errors;
}

}  // namespace zsar
