#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "zsar/classify/classifier.hpp"
#include "zsar/core/io.hpp"
#include "zsar/core/random.hpp"

namespace zsar {

// TruZe test classes.
inline const std::vector<std::string>& truze_ucf101_test_classes() {
  static const std::vector<std::string> classes = {
      "apply lipstick", "balance beam",       "baseball pitch",  "billiards",        "blow dry hair",
      "cutting in kitchen", "fencing",        "field hockey penalty", "front crawl",  "hammering",
      "handstand pushups", "handstand walking", "horse race",    "ice dancing",      "jumping jack",
      "military parade", "mixing",            "nunchucks",       "parallel bars",    "pizza tossing",
      "playing daf",     "playing dhol",      "playing sitar",   "playing tabla",    "pommel horse",
      "punch",           "rafting",           "rowing",          "still rings",      "sumo wrestling",
      "table tennis shot", "uneven bars",     "wall pushups",    "yo yo"};
  return classes;
}

inline const std::vector<std::string>& truze_hmdb51_test_classes() {
  static const std::vector<std::string> classes = {
      "chew", "climb stairs", "draw sword", "fall floor", "fencing", "flic flac", "handstand", "hit",
      "jump", "kick",         "pick",       "pour",       "run",     "sit",       "shoot gun", "smile",
      "stand", "sword exercise", "talk",    "turn",       "walk",    "wave"};
  return classes;
}

enum class ProtocolName { truze, zero_fifty, fifty_fifty };

inline std::string_view to_string(ProtocolName p) {
  switch (p) {
    case ProtocolName::truze: return "truze";
    case ProtocolName::zero_fifty: return "zero_fifty";
    case ProtocolName::fifty_fifty: return "fifty_fifty";
  }
  return "?";
}

inline ProtocolName parse_protocol_name(std::string_view s) {
  if (s == "truze") return ProtocolName::truze;
  if (s == "zero_fifty") return ProtocolName::zero_fifty;
  if (s == "fifty_fifty") return ProtocolName::fifty_fifty;
  throw ConfigError("unknown protocol '" + std::string(s) + "' (expected truze|zero_fifty|fifty_fifty)");
}

struct Protocol {
  ProtocolName name = ProtocolName::zero_fifty;
  std::vector<std::string> test_classes;  // truze only
  double split_fraction = 0.5;
  std::size_t n_runs = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_runs == 0) throw ConfigError("protocol n_runs must be positive");
    if (name == ProtocolName::truze) {
      if (test_classes.empty()) throw ConfigError("truze protocol needs test classes");
    } else if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
      throw ConfigError("split fraction must lie in (0, 1], got " + format_double(split_fraction));
    }
  }

  json to_json() const {
    json j = {{"name", std::string(to_string(name))}, {"n_runs", n_runs}, {"seed", seed}};
    if (name == ProtocolName::truze)
      j["test_classes"] = test_classes;
    else
      j["fraction"] = split_fraction;
    return j;
  }
};

// {name, test_classes | fraction, n_runs, seed}; a truze protocol may give
// "dataset": "ucf101" | "hmdb51" instead of listing its classes.
inline Protocol parse_protocol(const json& j, std::string_view context = "protocol") {
  Protocol p;
  p.name = parse_protocol_name(required<std::string>(j, "name", context));
  p.seed = j.value("seed", std::uint64_t{0});
  if (p.name == ProtocolName::truze) {
    p.n_runs = j.value("n_runs", std::size_t{1});
    if (j.contains("test_classes")) {
      p.test_classes = j.at("test_classes").get<std::vector<std::string>>();
    } else {
      const auto ds = j.value("dataset", std::string());
      if (ds == "ucf101")
        p.test_classes = truze_ucf101_test_classes();
      else if (ds == "hmdb51")
        p.test_classes = truze_hmdb51_test_classes();
      else
        throw ConfigError(std::string(context) + ": truze needs test_classes or dataset ucf101|hmdb51");
    }
  } else {
    p.n_runs = j.value("n_runs", std::size_t{50});
    p.split_fraction = j.value("fraction", 0.5);
  }
  p.validate();
  return p;
}

inline Protocol load_protocol(const fs::path& path) { return parse_protocol(read_json_file(path), path.string()); }

struct Split {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
  std::uint64_t seed = 0;
};

// n_runs seeded splits with ceil(fraction * |classes|) unseen classes each.
// zero_fifty never has a seen set.
inline std::vector<Split> make_random_splits(const std::vector<std::string>& all_classes, const Protocol& protocol) {
  if (protocol.name == ProtocolName::truze) throw ConfigError("truze uses fixed class lists, not random splits");
  protocol.validate();
  std::vector<std::string> classes(all_classes);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) throw DataError("make_random_splits: no classes");
  const auto k = static_cast<std::size_t>(
      std::ceil(protocol.split_fraction * static_cast<double>(classes.size()) - 1e-9));
  std::vector<Split> splits;
  for (std::size_t r = 0; r < protocol.n_runs; ++r) {
    Split s;
    s.seed = derive_seed(protocol.seed, "split." + std::to_string(r));
    Rng rng(s.seed);
    std::vector<std::string> order = classes;
    shuffle(std::span<std::string>(order), rng);
    s.unseen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(s.unseen.begin(), s.unseen.end());
    if (protocol.name == ProtocolName::fifty_fifty) {
      s.seen.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
      std::sort(s.seen.begin(), s.seen.end());
    }
    if (!validate_disjoint(s.seen, s.unseen).pass) throw DataError("generated split is not disjoint");
    splits.push_back(std::move(s));
  }
  return splits;
}

// The splits a protocol evaluates: truze has its single fixed test list
// (repeated n_runs times), the random protocols sample.
inline std::vector<Split> protocol_splits(const std::vector<std::string>& all_classes, const Protocol& protocol) {
  if (protocol.name != ProtocolName::truze) return make_random_splits(all_classes, protocol);
  std::vector<Split> out;
  for (std::size_t r = 0; r < protocol.n_runs; ++r) out.push_back({{}, protocol.test_classes, protocol.seed});
  return out;
}

}  // namespace zsar
