#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "zsar/core/io.hpp"
#include "zsar/core/matrix.hpp"
#include "zsar/core/random.hpp"
#include "zsar/text/sentence.hpp"

namespace zsar {

enum class Modality { visual, audio, semantic };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::audio: return "audio";
    case Modality::semantic: return "semantic";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "visual") return Modality::visual;
  if (s == "audio") return Modality::audio;
  if (s == "semantic") return Modality::semantic;
  throw DataError("unknown modality '" + std::string(s) + "'");
}

// n_c feature vectors (rows) of one modality for one video.
struct FeatureStack {
  std::string video_id;
  Modality modality = Modality::visual;
  Matrix features;
  std::optional<std::size_t> stack_length;  // frames per stack, informational

  std::size_t n_c() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }

  void validate() const {
    if (features.rows() == 0) throw DataError("feature stack '" + video_id + "' is empty");
    if (features.cols() == 0) throw DataError("feature stack '" + video_id + "' has zero dimension");
    if (!all_finite(features)) throw DataError("feature stack '" + video_id + "' has non-finite entries");
  }
};

// Header "#<video_id> <dim> <n_c> <modality> [stack=<frames>]", then n_c
// lines of whitespace-separated numbers.
inline std::string format_feature_stack(const FeatureStack& s) {
  s.validate();
  std::string out = "#" + s.video_id + " " + std::to_string(s.dim()) + " " + std::to_string(s.n_c()) + " " +
                    std::string(to_string(s.modality));
  if (s.stack_length) out += " stack=" + std::to_string(*s.stack_length);
  out += '\n';
  for (std::size_t r = 0; r < s.n_c(); ++r) {
    for (std::size_t c = 0; c < s.dim(); ++c) {
      if (c) out += ' ';
      out += format_double(s.features(r, c));
    }
    out += '\n';
  }
  return out;
}

inline FeatureStack parse_feature_stack(std::string_view text, std::string_view context) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header) || header.empty() || header[0] != '#')
    throw DataError(std::string(context) + ": missing '#video_id dim n_c modality' header");
  const auto fields = split_whitespace(std::string_view(header).substr(1));
  if (fields.size() < 4) throw DataError(std::string(context) + ": malformed header: " + header);
  FeatureStack s;
  s.video_id = fields[0];
  const auto dim = static_cast<std::size_t>(parse_double(fields[1], context));
  const auto n_c = static_cast<std::size_t>(parse_double(fields[2], context));
  s.modality = parse_modality(fields[3]);
  for (std::size_t i = 4; i < fields.size(); ++i)
    if (fields[i].rfind("stack=", 0) == 0)
      s.stack_length = static_cast<std::size_t>(parse_double(fields[i].substr(6), context));
  s.features = Matrix(n_c, dim);
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    const auto vals = split_whitespace(line);
    if (vals.empty()) continue;
    if (r >= n_c) throw DataError(std::string(context) + ": more than n_c=" + std::to_string(n_c) + " rows");
    if (vals.size() != dim)
      throw DataError(std::string(context) + ": row " + std::to_string(r) + " has " +
                      std::to_string(vals.size()) + " values, expected " + std::to_string(dim));
    for (std::size_t c = 0; c < dim; ++c) s.features(r, c) = parse_double(vals[c], context);
    ++r;
  }
  if (r != n_c)
    throw DataError(std::string(context) + ": expected " + std::to_string(n_c) + " rows, found " + std::to_string(r));
  s.validate();
  return s;
}

// Primary (visual) stream plus the optional audio/semantic stream.
struct VideoFeatures {
  FeatureStack visual;
  std::optional<FeatureStack> secondary;
};

// Reads every *.feat file in a directory and groups stacks by video id.
inline std::map<std::string, VideoFeatures> load_feature_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("features directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".feat") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::map<std::string, std::optional<FeatureStack>> visual;
  std::map<std::string, std::optional<FeatureStack>> secondary;
  for (const auto& f : files) {
    FeatureStack s = parse_feature_stack(read_text_file(f), f.string());
    auto& slot = s.modality == Modality::visual ? visual[s.video_id] : secondary[s.video_id];
    if (slot) throw DataError(f.string() + ": duplicate stack for video '" + s.video_id + "'");
    slot = std::move(s);
  }
  std::map<std::string, VideoFeatures> out;
  for (auto& [id, v] : visual) {
    VideoFeatures vf{std::move(*v), std::nullopt};
    if (auto it = secondary.find(id); it != secondary.end()) vf.secondary = std::move(it->second);
    out.emplace(id, std::move(vf));
  }
  for (const auto& [id, s] : secondary)
    if (!out.contains(id)) throw DataError("video '" + id + "' has a secondary stream but no visual stream");
  return out;
}

inline void write_video_features(const fs::path& dir, const VideoFeatures& v) {
  write_text_file(dir / (v.visual.video_id + ".visual.feat"), format_feature_stack(v.visual));
  if (v.secondary)
    write_text_file(dir / (v.secondary->video_id + "." + std::string(to_string(v.secondary->modality)) + ".feat"),
                    format_feature_stack(*v.secondary));
}

// Cluster-structured synthetic features: every cluster has a random centre
// and samples add isotropic Gaussian noise.
class SyntheticFeatureGenerator {
 public:
  SyntheticFeatureGenerator(std::size_t clusters, std::size_t dim, double noise, std::uint64_t seed)
      : dim_(dim), noise_(noise), rng_(seed) {
    for (std::size_t k = 0; k < clusters; ++k) {
      Matrix c(1, dim);
      for (double& v : c.values()) v = standard_normal(rng_);
      centres_.push_back(std::move(c));
    }
  }

  FeatureStack sample(std::size_t cluster, std::string video_id, std::size_t n_c,
                      Modality modality = Modality::visual) {
    FeatureStack s{std::move(video_id), modality, Matrix(n_c, dim_), std::nullopt};
    for (std::size_t r = 0; r < n_c; ++r)
      for (std::size_t c = 0; c < dim_; ++c)
        s.features(r, c) = centres_.at(cluster)(0, c) + noise_ * standard_normal(rng_);
    return s;
  }

  std::size_t clusters() const noexcept { return centres_.size(); }

 private:
  std::size_t dim_;
  double noise_;
  Rng rng_;
  std::vector<Matrix> centres_;
};

}  // namespace zsar
