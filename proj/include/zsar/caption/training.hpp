#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsar/caption/bleu.hpp"
#include "zsar/caption/model.hpp"
#include "zsar/core/io.hpp"
#include "zsar/core/random.hpp"

namespace zsar {

struct CaptionExample {
  VideoFeatures features;
  Sentence caption;
};

enum class MonitoredMetric { bleu3, bleu4, meteor };

inline MonitoredMetric parse_monitored_metric(std::string_view s) {
  if (s == "bleu3") return MonitoredMetric::bleu3;
  if (s == "bleu4") return MonitoredMetric::bleu4;
  if (s == "meteor") return MonitoredMetric::meteor;
  throw ConfigError("unknown monitored metric '" + std::string(s) + "' (expected bleu3|bleu4|meteor)");
}

enum class Optimizer { sgd, adam };

inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd|adam)");
}

struct TrainingSchedule {
  std::size_t max_epochs = 60;
  std::size_t patience = 10;
  // Early stopping is not considered before this many epochs.
  std::size_t min_epochs = 0;
  std::size_t batch_size = 1;
  std::size_t max_caption_length = 30;
  double learning_rate = 0.1;
  double label_smoothing = 0.1;
  double clip_norm = 1.0;
  Optimizer optimizer = Optimizer::sgd;
  MonitoredMetric monitor = MonitoredMetric::bleu4;
  // Stop as soon as the monitored metric reaches this value.
  std::optional<double> target_metric;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_caption_length == 0) throw ConfigError("max_caption_length must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  std::optional<double> meteor;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
  bool early_stopped = false;

  json to_json() const {
    json rows = json::array();
    for (const auto& e : epochs) {
      json meteor = nullptr;
      if (e.meteor) meteor = *e.meteor;
      rows.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"bleu3", e.bleu3}, {"bleu4", e.bleu4}, {"meteor", meteor}});
    }
    return {{"epochs", rows}, {"best_epoch", best_epoch}, {"best_metric", best_metric}, {"early_stopped", early_stopped}};
  }
};

// Per-epoch external Meteor score, given the epoch and the generated captions.
using MeteorHook = std::function<std::optional<double>(std::size_t epoch, const std::vector<Sentence>& candidates,
                                                       const std::vector<Sentence>& references)>;
using EpochCallback = std::function<void(const EpochRecord&, const Captioner&)>;

// Reads `{"epoch": n, "meteor": x}` lines produced by an external scorer.
inline MeteorHook meteor_scores_from_file(const fs::path& path) {
  std::map<std::size_t, double> scores;
  for (const auto& r : read_jsonl(path))
    scores[required<std::size_t>(r, "epoch", path.string())] = required<double>(r, "meteor", path.string());
  return [scores](std::size_t epoch, const std::vector<Sentence>&, const std::vector<Sentence>&) -> std::optional<double> {
    auto it = scores.find(epoch);
    if (it == scores.end()) return std::nullopt;
    return it->second;
  };
}

// Smoothed one-hot targets: 1 - eps on the true token and eps / (V - 2) on
// every other token except PAD, which gets 0. PAD target rows carry zero
// weight in the loss.
inline Matrix smoothed_targets(const std::vector<std::size_t>& targets, std::size_t vocab_size, double eps) {
  if (vocab_size < 3) throw ConfigError("label smoothing needs a vocabulary of at least 3 tokens");
  Matrix q(targets.size(), vocab_size);
  const double spread = eps / static_cast<double>(vocab_size - 2);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == Vocabulary::kPad) continue;
    for (std::size_t c = 0; c < vocab_size; ++c)
      q(r, c) = c == Vocabulary::kPad ? 0.0 : (c == targets[r] ? 1.0 - eps : spread);
  }
  return q;
}

// Decoder input ([BOS] + caption) and target (caption + [EOS]), both padded
// with PAD to `length`.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> teacher_forcing_pair(
    const std::vector<std::size_t>& caption, std::size_t length) {
  std::vector<std::size_t> in{Vocabulary::kBos}, out = caption;
  in.insert(in.end(), caption.begin(), caption.end());
  out.push_back(Vocabulary::kEos);
  in.resize(std::max(length, in.size()), Vocabulary::kPad);
  out.resize(std::max(length, out.size()), Vocabulary::kPad);
  return {in, out};
}

// Mean per-token KL loss over a padded batch. Adds gradients into `grads`
// when given.
inline double batch_loss(const Captioner& model, const std::vector<const CaptionExample*>& batch,
                         const std::vector<std::vector<std::size_t>>& encoded, double smoothing,
                         std::vector<Matrix>* grads, Rng* dropout_rng) {
  std::size_t length = 0, tokens = 0;
  for (const auto& e : encoded) {
    length = std::max(length, e.size() + 1);
    tokens += e.size() + 1;
  }
  ag::Tape tape(grads != nullptr);
  Forward f(tape, model.params(), grads, dropout_rng, dropout_rng ? model.config().dropout : 0.0);
  std::optional<ag::Var> total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto [in, out] = teacher_forcing_pair(encoded[i], length);
    std::vector<double> weight(out.size());
    for (std::size_t r = 0; r < out.size(); ++r) weight[r] = out[r] == Vocabulary::kPad ? 0.0 : 1.0;
    const auto enc = model.encode(f, batch[i]->features);
    ag::Var logp = model.decode_log_probs(f, in, enc);
    ag::Var kl = ag::weighted_kl(logp, smoothed_targets(out, model.vocabulary().size(), smoothing), weight);
    ag::Var part = ag::scale(kl, static_cast<double>(encoded[i].size() + 1) / static_cast<double>(tokens));
    total = total ? ag::add(*total, part) : part;
  }
  if (grads) tape.backward(*total);
  return total->value()(0, 0);
}

namespace detail {

inline double clip_gradients(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("captioner gradient is not finite");
  if (norm > max_norm)
    for (auto& g : grads) g *= max_norm / norm;
  return norm;
}

class ParameterUpdater {
 public:
  ParameterUpdater(const TrainingSchedule& s, const ParameterSet& p) : s_(s) {
    if (s.optimizer == Optimizer::adam) {
      m_ = p.zeros_like();
      v_ = p.zeros_like();
    }
  }

  void apply(ParameterSet& params, const std::vector<Matrix>& grads) {
    if (s_.optimizer == Optimizer::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params.at(i) -= grads[i] * s_.learning_rate;
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params.at(i).values();
      const auto g = grads[i].values();
      auto m = m_[i].values();
      auto v = v_[i].values();
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        p[k] -= s_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
  }

 private:
  const TrainingSchedule& s_;
  std::vector<Matrix> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace detail

// Greedy captions for every example.
inline std::vector<Sentence> caption_corpus(const Captioner& model, const std::vector<CaptionExample>& corpus,
                                            std::size_t max_len) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus) out.push_back(model.generate_caption(e.features, max_len));
  return out;
}

// Corpus Bleu; an all-empty candidate set scores 0 instead of raising.
inline double corpus_bleu(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references, int n) {
  bool any = false;
  for (const auto& c : candidates) any = any || !c.empty();
  return any ? bleu(candidates, references, n) : 0.0;
}

inline TrainingHistory train_captioner(Captioner& model, const std::vector<CaptionExample>& corpus,
                                       const TrainingSchedule& schedule, const MeteorHook& meteor = {},
                                       const EpochCallback& on_epoch = {}) {
  schedule.validate();
  if (corpus.empty()) throw DataError("train_captioner: empty corpus");
  if (schedule.monitor == MonitoredMetric::meteor && !meteor)
    throw ConfigError("monitoring meteor requires an external meteor score source");
  std::vector<std::vector<std::size_t>> encoded;
  std::vector<Sentence> references;
  for (const auto& e : corpus) {
    encoded.push_back(model.vocabulary().encode(e.caption.text()));
    if (encoded.back().empty()) throw DataError("train_captioner: empty caption for '" + e.features.visual.video_id + "'");
    references.push_back(e.caption);
  }

  Rng order_rng(derive_seed(schedule.seed, "captioner.order"));
  Rng dropout_rng(derive_seed(schedule.seed, "captioner.dropout"));
  detail::ParameterUpdater updater(schedule, model.params());
  TrainingHistory history;
  ParameterSet best = model.params();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      std::vector<const CaptionExample*> batch;
      std::vector<std::vector<std::size_t>> enc;
      for (std::size_t i = start; i < std::min(order.size(), start + schedule.batch_size); ++i) {
        batch.push_back(&corpus[order[i]]);
        enc.push_back(encoded[order[i]]);
      }
      auto grads = model.params().zeros_like();
      const double loss = batch_loss(model, batch, enc, schedule.label_smoothing, &grads, &dropout_rng);
      if (!std::isfinite(loss)) throw NumericError("captioner loss became non-finite at epoch " + std::to_string(epoch));
      detail::clip_gradients(grads, schedule.clip_norm);
      updater.apply(model.params(), grads);
      loss_sum += loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    const auto candidates = caption_corpus(model, corpus, schedule.max_caption_length);
    rec.bleu3 = corpus_bleu(candidates, references, 3);
    rec.bleu4 = corpus_bleu(candidates, references, 4);
    if (meteor) rec.meteor = meteor(epoch, candidates, references);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, model);

    double metric = rec.bleu4;
    if (schedule.monitor == MonitoredMetric::bleu3) metric = rec.bleu3;
    if (schedule.monitor == MonitoredMetric::meteor) {
      if (!rec.meteor) throw DataError("no external meteor score for epoch " + std::to_string(epoch));
      metric = *rec.meteor;
    }
    if (metric > history.best_metric) {
      history.best_metric = metric;
      history.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (schedule.target_metric && metric >= *schedule.target_metric) break;
    if (epoch >= schedule.min_epochs && since_best >= schedule.patience) {
      history.early_stopped = true;
      break;
    }
  }
  model.params() = std::move(best);
  return history;
}

// Corpus directory: *.feat feature files plus captions.jsonl lines of
// {"video_id", "caption"}.
inline std::vector<CaptionExample> load_caption_corpus(const fs::path& dir) {
  const auto features = load_feature_dir(dir);
  const fs::path captions = dir / "captions.jsonl";
  std::vector<CaptionExample> corpus;
  for (const auto& r : read_jsonl(captions)) {
    const auto id = required<std::string>(r, "video_id", captions.string());
    auto it = features.find(id);
    if (it == features.end()) throw DataError(captions.string() + ": no features for video '" + id + "'");
    corpus.push_back({it->second, Sentence(required<std::string>(r, "caption", captions.string()), SentenceOrigin::document)});
  }
  if (corpus.empty()) throw DataError(captions.string() + ": no captions");
  return corpus;
}

}  // namespace zsar
