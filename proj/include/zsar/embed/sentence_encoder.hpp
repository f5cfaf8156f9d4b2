#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "zsar/core/io.hpp"
#include "zsar/core/matrix.hpp"
#include "zsar/core/random.hpp"
#include "zsar/embed/embedding.hpp"
#include "zsar/text/segmentation.hpp"

namespace zsar {

enum class Objective { classification, regression, triplet };

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::classification: return "classification";
    case Objective::regression: return "regression";
    case Objective::triplet: return "triplet";
  }
  return "?";
}

struct EmbedderConfig {
  std::size_t vocabulary_size = 0;  // 0: every token seen in training (plus UNK)
  std::size_t n_s = 16;
  Objective objective = Objective::regression;
  std::size_t k_labels = 3;
  double margin_epsilon = 1.0;
  std::uint64_t seed = 0;
  double learning_rate = 0.1;
  std::size_t epochs = 100;
  double init_scale = 0.5;

  void validate() const {
    if (n_s == 0) throw ConfigError("embedder n_s must be positive");
    if (margin_epsilon <= 0.0) throw ConfigError("triplet margin epsilon must be positive");
    if (objective == Objective::classification && k_labels < 2)
      throw ConfigError("classification objective needs k_labels >= 2");
    if (learning_rate <= 0.0) throw ConfigError("embedder learning rate must be positive");
  }
};

// Word vocabulary for the toy encoder. Id 0 is UNK.
class TokenVocabulary {
 public:
  static constexpr std::size_t kUnk = 0;

  TokenVocabulary() : tokens_{"<unk>"} {}

  // Most frequent first, ties alphabetical; capped at max_size entries
  // including UNK when max_size > 0.
  static TokenVocabulary build(const std::vector<std::string>& texts, std::size_t max_size = 0) {
    std::map<std::string, std::size_t> freq;
    for (const auto& t : texts)
      for (auto& w : content_tokens(t)) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    TokenVocabulary v;
    for (auto& [w, n] : ranked) {
      if (max_size > 0 && v.tokens_.size() >= max_size) break;
      v.add(w);
    }
    return v;
  }

  static TokenVocabulary from_tokens(const std::vector<std::string>& tokens) {
    TokenVocabulary v;
    for (const auto& t : tokens)
      if (t != "<unk>") v.add(t);
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  TokenSequence encode(std::string_view text) const {
    TokenSequence seq;
    for (const auto& w : content_tokens(text)) {
      auto it = index_.find(w);
      seq.token_ids.push_back(it == index_.end() ? kUnk : it->second);
    }
    return seq;
  }

 private:
  void add(const std::string& w) {
    if (index_.contains(w)) return;
    index_.emplace(w, tokens_.size());
    tokens_.push_back(w);
  }

  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

// Token-embedding table followed by mean pooling; both sides of a sentence
// pair go through this one shared encoder.
class ToySentenceEncoder final : public EmbeddingProvider {
 public:
  ToySentenceEncoder(TokenVocabulary vocab, Matrix table, std::string id)
      : vocab_(std::move(vocab)), table_(std::move(table)), id_(std::move(id)) {
    if (table_.rows() != vocab_.size())
      throw ConfigError("toy encoder table rows must equal vocabulary size");
    if (table_.cols() == 0) throw ConfigError("toy encoder dimension must be positive");
  }

  static ToySentenceEncoder initialize(TokenVocabulary vocab, const EmbedderConfig& cfg,
                                       std::string id = "toy") {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "embedder.init"));
    Matrix table(vocab.size(), cfg.n_s);
    for (double& v : table.values()) v = cfg.init_scale * standard_normal(rng);
    return ToySentenceEncoder(std::move(vocab), std::move(table), std::move(id));
  }

  std::string id() const override { return id_; }
  std::size_t dimension() const override { return table_.cols(); }

  EmbeddingVector embed_text(std::string_view text) const override {
    const TokenSequence seq = vocab_.encode(text);
    if (seq.length() == 0) throw DataError("cannot embed a sentence without tokens");
    return {pool(seq), id_};
  }

  std::vector<double> pool(const TokenSequence& seq) const {
    std::vector<double> u(table_.cols(), 0.0);
    for (std::size_t id : seq.token_ids) {
      if (id >= table_.rows()) throw DataError("token id out of vocabulary");
      const auto row = table_.row(id);
      for (std::size_t j = 0; j < u.size(); ++j) u[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(seq.length());
    for (double& x : u) x *= inv;
    return u;
  }

  // Scatters dL/du back onto the table rows used by the mean.
  void accumulate_pool_gradient(const TokenSequence& seq, std::span<const double> du,
                                Matrix& table_grad) const {
    const double inv = 1.0 / static_cast<double>(seq.length());
    for (std::size_t id : seq.token_ids) {
      auto row = table_grad.row(id);
      for (std::size_t j = 0; j < du.size(); ++j) row[j] += inv * du[j];
    }
  }

  const TokenVocabulary& vocabulary() const noexcept { return vocab_; }
  const Matrix& table() const noexcept { return table_; }
  Matrix& table() noexcept { return table_; }

  json to_json() const {
    return {{"id", id_}, {"n_s", table_.cols()}, {"tokens", vocab_.tokens()}, {"table", table_.values()}};
  }

  static ToySentenceEncoder from_json(const json& j) {
    const auto tokens = required<std::vector<std::string>>(j, "tokens", "toy encoder");
    const auto n_s = required<std::size_t>(j, "n_s", "toy encoder");
    auto values = required<std::vector<double>>(j, "table", "toy encoder");
    if (values.size() != tokens.size() * n_s) throw DataError("toy encoder: table size mismatch");
    Matrix table(tokens.size(), n_s);
    table.values() = std::move(values);
    return ToySentenceEncoder(TokenVocabulary::from_tokens(tokens), std::move(table),
                              required<std::string>(j, "id", "toy encoder"));
  }

  static ToySentenceEncoder load(const fs::path& path) { return from_json(read_json_file(path)); }
  void save(const fs::path& path) const { write_text_file(path, to_json().dump() + "\n"); }

 private:
  TokenVocabulary vocab_;
  Matrix table_;
  std::string id_;
};

// Trainable map W_t (3 n_s x k) over [u_a, u_b, |u_a - u_b|].
struct ClassificationHead {
  Matrix weights;

  std::vector<double> logits(std::span<const double> ua, std::span<const double> ub) const {
    const auto z = features(ua, ub);
    std::vector<double> out(weights.cols(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i)
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += z[i] * weights(i, c);
    return out;
  }

  static std::vector<double> features(std::span<const double> ua, std::span<const double> ub) {
    std::vector<double> z;
    z.reserve(ua.size() * 3);
    z.insert(z.end(), ua.begin(), ua.end());
    z.insert(z.end(), ub.begin(), ub.end());
    for (std::size_t i = 0; i < ua.size(); ++i) z.push_back(std::abs(ua[i] - ub[i]));
    return z;
  }
};

struct ObjectiveGradient {
  double loss = 0.0;
  Matrix table;  // d loss / d token table
  Matrix head;   // d loss / d W_t (classification only)
};

namespace detail {
inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

// Cross-entropy of softmax(W_t [u_a, u_b, |u_a - u_b|]) against `label`.
inline ObjectiveGradient classification_gradient(const ToySentenceEncoder& enc,
                                                 const ClassificationHead& head,
                                                 const TokenSequence& a, const TokenSequence& b,
                                                 std::size_t label) {
  const std::size_t n = enc.dimension();
  const std::size_t k = head.weights.cols();
  if (head.weights.rows() != 3 * n) throw ConfigError("classification head must be 3*n_s rows");
  if (label >= k) throw DataError("label " + std::to_string(label) + " outside [0, k_labels)");
  const auto ua = enc.pool(a);
  const auto ub = enc.pool(b);
  const auto z = ClassificationHead::features(ua, ub);
  auto logits = head.logits(ua, ub);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double& l : logits) denom += std::exp(l - mx);
  std::vector<double> p(k);
  for (std::size_t c = 0; c < k; ++c) p[c] = std::exp(logits[c] - mx) / denom;

  ObjectiveGradient g;
  g.loss = -(logits[label] - mx - std::log(denom));
  std::vector<double> dlogit = p;
  dlogit[label] -= 1.0;
  g.head = Matrix(3 * n, k);
  std::vector<double> dz(3 * n, 0.0);
  for (std::size_t i = 0; i < 3 * n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      g.head(i, c) = z[i] * dlogit[c];
      dz[i] += head.weights(i, c) * dlogit[c];
    }
  std::vector<double> dua(n), dub(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double s = detail::sign(ua[j] - ub[j]);
    dua[j] = dz[j] + s * dz[2 * n + j];
    dub[j] = dz[n + j] - s * dz[2 * n + j];
  }
  g.table = Matrix(enc.table().rows(), n);
  enc.accumulate_pool_gradient(a, dua, g.table);
  enc.accumulate_pool_gradient(b, dub, g.table);
  return g;
}

// Squared error between cos(u_a, u_b) and the target similarity.
inline ObjectiveGradient regression_gradient(const ToySentenceEncoder& enc, const TokenSequence& a,
                                             const TokenSequence& b, double target) {
  const auto ua = enc.pool(a);
  const auto ub = enc.pool(b);
  const double na = l2_norm(ua), nb = l2_norm(ub);
  if (na == 0.0 || nb == 0.0) throw NumericError("regression objective: zero-norm embedding");
  const double c = dot(ua, ub) / (na * nb);
  const double residual = c - target;
  ObjectiveGradient g;
  g.loss = residual * residual;
  const double dc = 2.0 * residual;
  const std::size_t n = ua.size();
  std::vector<double> dua(n), dub(n);
  for (std::size_t j = 0; j < n; ++j) {
    dua[j] = dc * (ub[j] / (na * nb) - c * ua[j] / (na * na));
    dub[j] = dc * (ua[j] / (na * nb) - c * ub[j] / (nb * nb));
  }
  g.table = Matrix(enc.table().rows(), n);
  enc.accumulate_pool_gradient(a, dua, g.table);
  enc.accumulate_pool_gradient(b, dub, g.table);
  return g;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

// max(|s_a - s_p| - |s_a - s_n| + eps, 0) on raw embeddings.
inline double triplet_loss(std::span<const double> sa, std::span<const double> sp,
                           std::span<const double> sn, double epsilon) {
  return std::max(euclidean_distance(sa, sp) - euclidean_distance(sa, sn) + epsilon, 0.0);
}

inline ObjectiveGradient triplet_gradient(const ToySentenceEncoder& enc, const TokenSequence& a,
                                          const TokenSequence& p, const TokenSequence& n,
                                          double epsilon) {
  const auto sa = enc.pool(a), sp = enc.pool(p), sn = enc.pool(n);
  const double dap = euclidean_distance(sa, sp);
  const double dan = euclidean_distance(sa, sn);
  ObjectiveGradient g;
  g.loss = std::max(dap - dan + epsilon, 0.0);
  g.table = Matrix(enc.table().rows(), enc.dimension());
  if (g.loss <= 0.0) return g;
  const std::size_t d = sa.size();
  std::vector<double> da(d, 0.0), dp(d, 0.0), dn(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    // Subgradient 0 where a distance vanishes.
    const double gp = dap > 0.0 ? (sa[j] - sp[j]) / dap : 0.0;
    const double gn = dan > 0.0 ? (sa[j] - sn[j]) / dan : 0.0;
    da[j] = gp - gn;
    dp[j] = -gp;
    dn[j] = gn;
  }
  enc.accumulate_pool_gradient(a, da, g.table);
  enc.accumulate_pool_gradient(p, dp, g.table);
  enc.accumulate_pool_gradient(n, dn, g.table);
  return g;
}

struct LabeledPair {
  Sentence a, b;
  std::size_t label = 0;
};

struct ScoredPair {
  Sentence a, b;
  double target = 0.0;
};

struct Triplet {
  Sentence anchor, positive, negative;
};

struct TrainedEmbedder {
  ToySentenceEncoder encoder;
  std::optional<ClassificationHead> head;
  std::vector<double> epoch_loss;  // mean training loss after each epoch
  double initial_loss = 0.0;
};

namespace detail {

template <typename Item, typename GradFn>
TrainedEmbedder sgd_train(ToySentenceEncoder enc, std::optional<ClassificationHead> head,
                          const std::vector<Item>& items, const EmbedderConfig& cfg, GradFn grad) {
  auto mean_loss = [&](const ToySentenceEncoder& e, const std::optional<ClassificationHead>& h) {
    double total = 0.0;
    for (const auto& it : items) total += grad(e, h, it).loss;
    return total / static_cast<double>(items.size());
  };
  TrainedEmbedder out{enc, head, {}, mean_loss(enc, head)};
  Rng rng(derive_seed(cfg.seed, "embedder.train"));
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t idx : order) {
      ObjectiveGradient g = grad(out.encoder, out.head, items[idx]);
      out.encoder.table() -= g.table * cfg.learning_rate;
      if (out.head) out.head->weights -= g.head * cfg.learning_rate;
    }
    out.epoch_loss.push_back(mean_loss(out.encoder, out.head));
  }
  return out;
}

template <typename Items, typename F>
TokenVocabulary vocabulary_for(const Items& items, const EmbedderConfig& cfg, F&& texts_of) {
  std::vector<std::string> texts;
  for (const auto& it : items)
    for (const auto* s : texts_of(it)) texts.push_back(s->text());
  return TokenVocabulary::build(texts, cfg.vocabulary_size);
}

}  // namespace detail

inline TrainedEmbedder train_classification_objective(const std::vector<LabeledPair>& pairs,
                                                      EmbedderConfig cfg) {
  cfg.objective = Objective::classification;
  cfg.validate();
  if (pairs.empty()) throw DataError("classification objective: no training pairs");
  for (const auto& p : pairs)
    if (p.label >= cfg.k_labels)
      throw ConfigError("label " + std::to_string(p.label) + " does not fit k_labels=" +
                        std::to_string(cfg.k_labels));
  auto vocab = detail::vocabulary_for(pairs, cfg, [](const LabeledPair& p) {
    return std::vector<const Sentence*>{&p.a, &p.b};
  });
  auto enc = ToySentenceEncoder::initialize(std::move(vocab), cfg, "toy-classification");
  Rng rng(derive_seed(cfg.seed, "embedder.head"));
  ClassificationHead head{Matrix(3 * cfg.n_s, cfg.k_labels)};
  for (double& w : head.weights.values()) w = 0.1 * standard_normal(rng);
  struct Encoded { TokenSequence a, b; std::size_t label; };
  std::vector<Encoded> data;
  for (const auto& p : pairs)
    data.push_back({enc.vocabulary().encode(p.a.text()), enc.vocabulary().encode(p.b.text()), p.label});
  return detail::sgd_train(std::move(enc), head, data, cfg,
                           [](const ToySentenceEncoder& e, const std::optional<ClassificationHead>& h,
                              const Encoded& d) { return classification_gradient(e, *h, d.a, d.b, d.label); });
}

inline TrainedEmbedder train_regression_objective(const std::vector<ScoredPair>& pairs,
                                                  EmbedderConfig cfg) {
  cfg.objective = Objective::regression;
  cfg.validate();
  if (pairs.empty()) throw DataError("regression objective: no training pairs");
  for (const auto& p : pairs)
    if (!(p.target >= -1.0 && p.target <= 1.0))
      throw DataError("regression target " + format_double(p.target) + " outside [-1, 1]");
  auto vocab = detail::vocabulary_for(pairs, cfg, [](const ScoredPair& p) {
    return std::vector<const Sentence*>{&p.a, &p.b};
  });
  auto enc = ToySentenceEncoder::initialize(std::move(vocab), cfg, "toy-regression");
  struct Encoded { TokenSequence a, b; double target; };
  std::vector<Encoded> data;
  for (const auto& p : pairs)
    data.push_back({enc.vocabulary().encode(p.a.text()), enc.vocabulary().encode(p.b.text()), p.target});
  return detail::sgd_train(std::move(enc), std::nullopt, data, cfg,
                           [](const ToySentenceEncoder& e, const std::optional<ClassificationHead>&,
                              const Encoded& d) { return regression_gradient(e, d.a, d.b, d.target); });
}

inline TrainedEmbedder train_triplet_objective(const std::vector<Triplet>& triplets,
                                               EmbedderConfig cfg) {
  cfg.objective = Objective::triplet;
  cfg.validate();
  if (triplets.empty()) throw DataError("triplet objective: no training triplets");
  auto vocab = detail::vocabulary_for(triplets, cfg, [](const Triplet& t) {
    return std::vector<const Sentence*>{&t.anchor, &t.positive, &t.negative};
  });
  auto enc = ToySentenceEncoder::initialize(std::move(vocab), cfg, "toy-triplet");
  struct Encoded { TokenSequence a, p, n; };
  std::vector<Encoded> data;
  for (const auto& t : triplets)
    data.push_back({enc.vocabulary().encode(t.anchor.text()), enc.vocabulary().encode(t.positive.text()),
                    enc.vocabulary().encode(t.negative.text())});
  const double eps = cfg.margin_epsilon;
  return detail::sgd_train(std::move(enc), std::nullopt, data, cfg,
                           [eps](const ToySentenceEncoder& e, const std::optional<ClassificationHead>&,
                                 const Encoded& d) { return triplet_gradient(e, d.a, d.p, d.n, eps); });
}

}  // namespace zsar
