// Acceptance gate: one PASS/FAIL/SKIP line per criterion. Exits non-zero if
// any criterion fails.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sys/wait.h>

#include "oracles.hpp"
#include "toy_corpus.hpp"
#include "zsar/classify/classifier.hpp"
#include "zsar/embed/providers.hpp"
#include "zsar/embed/sentence_encoder.hpp"
#include "zsar/eval/experiment.hpp"
#include "zsar/eval/statistics.hpp"
#include "zsar/pipeline/fixture.hpp"
#include "zsar/pipeline/pipeline.hpp"

using namespace zsar;

namespace {

struct Outcome {
  enum { pass, fail, skip } status = pass;
  std::string detail;
};

Outcome failed(std::string why) { return {Outcome::fail, std::move(why)}; }

int failures = 0;

void criterion(int n, const std::string& name, const std::function<Outcome()>& fn) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = failed(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIP";
  if (o.status == Outcome::fail) ++failures;
  std::cout << tag << " [" << n << "] " << name << " (" << std::fixed << std::setprecision(1) << secs << "s)";
  if (!o.detail.empty()) std::cout << ": " << o.detail;
  std::cout << std::endl;
}

TokenSequence random_prefix(std::size_t len, std::size_t vocab, Rng& rng) {
  TokenSequence p{{Vocabulary::kBos}};
  while (p.length() < len) p.token_ids.push_back(Vocabulary::kEos + uniform_index(rng, vocab - Vocabulary::kEos));
  return p;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& x : m.values()) x = scale * standard_normal(rng);
  return m;
}

// Gaussian vector seeded by the text itself.
class HashedGaussian final : public EmbeddingProvider {
 public:
  explicit HashedGaussian(std::size_t dim) : dim_(dim) {}
  std::string id() const override { return "gauss-" + std::to_string(dim_); }
  std::size_t dimension() const override { return dim_; }
  EmbeddingVector embed_text(std::string_view text) const override {
    Rng rng(derive_seed(99, text));
    EmbeddingVector v{std::vector<double>(dim_), id()};
    for (double& x : v.values) x = standard_normal(rng);
    return v;
  }

 private:
  std::size_t dim_;
};

double worst_gradient_error(Matrix& param, const Matrix& analytic, const std::function<double()>& loss) {
  double worst = 0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double numeric = oracle::central_difference(loss, param.values()[i], 1e-6);
    worst = std::max(worst, oracle::relative_error(analytic.values()[i], numeric, 1e-7));
  }
  return worst;
}

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(4) << x;
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ZSAR_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const FixtureInfo& fixture() {
  static testing_support::TempDir dir("acceptance");
  static const FixtureInfo info = make_synthetic_fixture(dir.path() / "synthetic");
  return info;
}

// --- criteria -------------------------------------------------------------------

Outcome attention_correctness() {
  Rng rng(2024);
  double worst_sum = 0;
  std::size_t sites = 0;
  std::vector<Captioner> models;
  for (auto arch : {Architecture::transformer, Architecture::bmt})
    for (std::uint64_t seed : {17u, 18u, 19u}) {
      auto cfg = toy::gradcheck_config(arch);
      cfg.seed = seed;
      models.emplace_back(cfg, toy::twelve_token_vocabulary());
    }
  for (int t = 0; t < 1000; ++t) {
    const Captioner& m = models[static_cast<std::size_t>(t) % models.size()];
    std::vector<Matrix> log;
    const auto v = toy::random_video(m.config(), rng, 1 + uniform_index(rng, 6), 1 + uniform_index(rng, 6));
    const auto enc = m.encode(v, &log);
    m.decode_all(random_prefix(1 + uniform_index(rng, 8), 12, rng), enc, &log);
    for (const auto& w : log) {
      ++sites;
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0;
        for (std::size_t c = 0; c < w.cols(); ++c) {
          if (!(w(r, c) >= 0.0)) return failed("negative attention weight");
          s += w(r, c);
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    }
  }
  if (worst_sum > 1e-6) return failed("row sum off by " + fmt(worst_sum));
  double worst_oracle = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 7), k = 1 + uniform_index(rng, 7), d = 1 + uniform_index(rng, 9);
    const Matrix q = random_matrix(n, d, rng, 2), kk = random_matrix(k, d, rng, 2), v = random_matrix(k, 4, rng);
    const auto r = scaled_dot_product_attention(q, kk, v, d);
    const auto o = oracle::attention(q, kk, v);
    worst_oracle = std::max({worst_oracle, max_abs_difference(r.output, o.output), max_abs_difference(r.weights, o.weights)});
  }
  if (worst_oracle > 1e-9) return failed("oracle difference " + fmt(worst_oracle));
  return {Outcome::pass, std::to_string(sites) + " attention maps, max |row sum - 1| " + fmt(worst_sum) +
                             ", max oracle difference " + fmt(worst_oracle)};
}

Outcome gradient_checks() {
  std::string detail;
  for (auto arch : {Architecture::transformer, Architecture::bmt}) {
    const auto cfg = toy::gradcheck_config(arch);
    Captioner m(cfg, toy::twelve_token_vocabulary());
    if (m.vocabulary().size() != 12) return failed("vocabulary is not 12 tokens");
    Rng rng(arch == Architecture::transformer ? 10 : 11);
    const auto r = toy::gradient_check(m, rng, 1);
    detail += std::string(arch == Architecture::transformer ? "transformer" : "bmt") + " " + std::to_string(r.checked) +
              " entries worst " + fmt(r.worst) + "; ";
    if (r.worst >= 1e-3) return failed(detail + "at " + r.worst_name);
  }
  EmbedderConfig ec;
  ec.n_s = 3;
  ec.seed = 3;
  ec.init_scale = 1.0;
  auto enc = ToySentenceEncoder::initialize(TokenVocabulary::from_tokens({"a", "b", "c", "d"}), ec, "tiny");
  Rng rng(5);
  ClassificationHead head{random_matrix(9, 3, rng)};
  const auto a = enc.vocabulary().encode("a b b"), b = enc.vocabulary().encode("c d"), c = enc.vocabulary().encode("d");
  const auto gc = classification_gradient(enc, head, a, b, 2);
  auto closs = [&] { return classification_gradient(enc, head, a, b, 2).loss; };
  const double e1 = std::max(worst_gradient_error(enc.table(), gc.table, closs), worst_gradient_error(head.weights, gc.head, closs));
  const auto gr = regression_gradient(enc, a, b, 0.3);
  const double e2 = worst_gradient_error(enc.table(), gr.table, [&] { return regression_gradient(enc, a, b, 0.3).loss; });
  const auto gt = triplet_gradient(enc, c, a, b, 5.0);
  if (!(gt.loss > 0)) return failed("triplet fixture is inactive");
  const double e3 = worst_gradient_error(enc.table(), gt.table, [&] { return triplet_gradient(enc, c, a, b, 5.0).loss; });
  detail += "embedder classification " + fmt(e1) + ", regression " + fmt(e2) + ", triplet " + fmt(e3);
  if (std::max({e1, e2, e3}) >= 1e-4) return failed(detail);
  return {Outcome::pass, detail};
}

Outcome decoder_causality() {
  for (auto arch : {Architecture::transformer, Architecture::bmt}) {
    const auto cfg = toy::gradcheck_config(arch);
    const Captioner m(cfg, toy::twelve_token_vocabulary());
    Rng rng(arch == Architecture::transformer ? 31 : 32);
    for (int t = 0; t < 100; ++t) {
      const auto enc = m.encode(toy::random_video(cfg, rng, 1 + uniform_index(rng, 5), 1 + uniform_index(rng, 5)));
      const auto prefix = random_prefix(2 + uniform_index(rng, 9), 12, rng);
      const Matrix full = m.decode_all(prefix, enc);
      for (std::size_t len = 1; len < prefix.length(); ++len) {
        const TokenSequence cut{{prefix.token_ids.begin(), prefix.token_ids.begin() + static_cast<std::ptrdiff_t>(len)}};
        const Matrix part = m.decode_all(cut, enc);
        for (std::size_t r = 0; r < len; ++r)
          for (std::size_t c = 0; c < full.cols(); ++c)
            if (part(r, c) != full(r, c))
              return failed("prefix " + std::to_string(t) + " differs at position " + std::to_string(r));
      }
    }
  }
  return {Outcome::pass, "100 prefixes per architecture, bitwise equal"};
}

Outcome toy_trainability() {
  const auto one = toy::caption_corpus(1);
  Captioner single(toy::small_config(), toy::vocabulary_of(one));
  TrainingSchedule s;
  s.max_epochs = 300;
  s.patience = 300;
  s.target_metric = 1.0;
  const auto h1 = train_captioner(single, one, s);
  const std::string got = single.generate_caption(one[0].features, 30).text();
  const std::string want = single.vocabulary().decode(single.vocabulary().encode(one[0].caption.text()));
  if (got != want) return failed("single pair decodes to '" + got + "'");

  const auto twenty = toy::caption_corpus(20);
  Captioner m(toy::small_config(), toy::vocabulary_of(twenty));
  s.target_metric = 0.9;
  const auto h = train_captioner(m, twenty, s);
  std::vector<Sentence> refs;
  for (const auto& e : twenty) refs.push_back(e.caption);
  const double b4 = bleu(caption_corpus(m, twenty, 30), refs, 4);
  const std::string detail = "single pair exact after " + std::to_string(h1.epochs.size()) +
                             " epochs; 20 pairs Bleu@4 " + fmt(b4) + " after " + std::to_string(h.epochs.size()) + " epochs";
  if (b4 < 0.9) return failed(detail);
  return {Outcome::pass, detail};
}

Outcome classifier_oracle() {
  std::size_t videos = 0, ties = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t classes = 1 + uniform_index(rng, 6), protos = 1 + uniform_index(rng, 4);
    const std::size_t n_videos = std::min<std::size_t>(30, 500 / (classes * protos));
    auto table = std::make_shared<VectorTableProvider>("rand", 5);
    std::vector<PrototypeSet> sets;
    for (std::size_t c = 0; c < classes; ++c) {
      PrototypeSet set{"c" + std::to_string(c), PrototypeMode::sentences, {}, {}};
      for (std::size_t p = 0; p < protos; ++p) {
        const std::string text = set.class_label + "/" + std::to_string(p);
        std::vector<double> v(5);
        for (double& x : v) x = standard_normal(rng);
        // occasional exact duplicate across classes to exercise the tie rule
        if (c > 0 && p == 0 && uniform01(rng) < 0.3) v = table->embed_text("c0/0").values;
        table->insert(text, v);
        set.prototypes.emplace_back(text);
      }
      sets.push_back(set);
    }
    const auto space = build_joint_space(sets, *table);
    for (std::size_t i = 0; i < n_videos; ++i, ++videos) {
      std::vector<double> u(5);
      for (double& x : u) x = standard_normal(rng);
      if (i % 7 == 0) u = table->embed_text("c0/0").values;
      const EmbeddingVector ev{u, "rand"};
      const auto r = classify_vector("v", ev, space);
      // exhaustive scan in sorted-label order, strict improvement only
      std::string best_label;
      double best = -std::numeric_limits<double>::infinity();
      std::vector<std::pair<std::string, double>> all;
      for (const auto& p : space.prototype_vectors) all.emplace_back(p.class_label, cosine_similarity(ev, p.vector));
      std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const auto& [label, sim] : all)
        if (sim > best) {
          best = sim;
          best_label = label;
        }
      if (r.predicted != best_label || r.best_similarity != best)
        return failed("seed " + std::to_string(seed) + ": got " + r.predicted + " expected " + best_label);
      // one common positive scale keeps exact ties exact
      double runner_up = -2;
      for (const auto& [label, sim] : r.per_class_best)
        if (label != r.predicted) runner_up = std::max(runner_up, sim);
      const double margin = r.best_similarity - runner_up;
      const double gamma = std::exp(uniform(rng, -5, 5));
      JointSpace common = space;
      for (auto& p : common.prototype_vectors)
        for (double& x : p.vector.values) x *= gamma;
      EmbeddingVector cu = ev;
      for (double& x : cu.values) x *= gamma;
      if (classify_vector("v", cu, common).predicted != r.predicted)
        return failed("argmax changed under a common rescaling (seed " + std::to_string(seed) + ")");
      // independent scales per vector; only meaningful away from ties
      if (classes > 1 && margin <= 1e-9) {
        ++ties;
        continue;
      }
      JointSpace scaled = space;
      for (auto& p : scaled.prototype_vectors) {
        const double beta = std::exp(uniform(rng, -5, 5));
        for (double& x : p.vector.values) x *= beta;
      }
      EmbeddingVector su = ev;
      const double alpha = std::exp(uniform(rng, -5, 5));
      for (double& x : su.values) x *= alpha;
      if (classify_vector("v", su, scaled).predicted != r.predicted)
        return failed("argmax changed under per-vector rescaling (seed " + std::to_string(seed) + ", margin " +
                      fmt(margin) + ")");
    }
  }
  return {Outcome::pass, std::to_string(videos) + " videos over 20 fixtures (" + std::to_string(ties) +
                             " exact ties checked under common rescaling only)"};
}

Outcome selection_oracle() {
  const HashedGaussian gauss(8);
  Rng rng(77);
  const char* pool[] = {"horse", "field", "rider", "gallop", "sword", "piste", "lunge", "guitar", "chord",
                        "water", "pool", "swim", "kitchen", "knife", "board", "quickly", "slowly", "often"};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Sentence> sentences;
    const std::size_t n = 1 + uniform_index(rng, 50);
    for (std::size_t i = 0; i < n; ++i) {
      std::string s;
      const std::size_t words = 1 + uniform_index(rng, 14);
      for (std::size_t w = 0; w < words; ++w) s += std::string(w ? " " : "") + pool[uniform_index(rng, 18)];
      sentences.emplace_back(s);
    }
    const std::size_t min_words = 1 + uniform_index(rng, 8), max_sentences = 1 + uniform_index(rng, 12);
    std::vector<Sentence> kept;
    for (const auto& s : sentences)
      if (oracle::word_count(s.text()) >= min_words) kept.push_back(s);
    if (kept.empty()) {
      try {
        select_prototypes("horse_riding", sentences, gauss, min_words, max_sentences);
        return failed("expected an error when nothing survives");
      } catch (const ConfigError&) {
        continue;
      }
    }
    const auto label = gauss.embed_text("horse riding").values;
    std::vector<double> scores;
    for (const auto& s : kept) scores.push_back(oracle::cosine(gauss.embed_text(s.text()).values, label));
    const auto order = oracle::top_k(scores, max_sentences);
    const auto set = select_prototypes("horse_riding", sentences, gauss, min_words, max_sentences);
    if (set.prototypes.size() != order.size()) return failed("trial " + std::to_string(trial) + ": wrong count");
    for (std::size_t i = 0; i < order.size(); ++i) {
      const double a = *set.selection_scores[i], b = scores[order[i]];
      // duplicated texts have identical scores in both computations
      if (set.prototypes[i].text() != kept[order[i]].text() && std::abs(a - b) > 1e-12)
        return failed("trial " + std::to_string(trial) + " rank " + std::to_string(i));
    }
  }
  // duplicated-score fixture: identical sentences and identical scores keep document order
  const WordOverlapProvider overlap(256);
  std::vector<Sentence> dup{Sentence("the horse runs across the field today"), Sentence("a rider sits on the saddle now"),
                            Sentence("the horse runs across the field today"), Sentence("the horse runs across the field today")};
  const auto d = select_prototypes("horse", dup, overlap, 3, 3);
  if (d.prototypes.size() != 3 || d.selection_scores[0] != d.selection_scores[1] ||
      d.selection_scores[1] != d.selection_scores[2])
    return failed("duplicated fixture: unexpected scores");
  std::vector<std::size_t> origin;
  for (const auto& p : d.prototypes)
    for (std::size_t i = 0; i < dup.size(); ++i)
      if (dup[i].text() == p.text() && std::find(origin.begin(), origin.end(), i) == origin.end()) {
        origin.push_back(i);
        break;
      }
  if (origin != std::vector<std::size_t>{0, 2, 3}) return failed("duplicated fixture: order not by document position");
  return {Outcome::pass, "40 random fixtures of <= 50 sentences, duplicated-score tie-break"};
}

Outcome statistics() {
  const auto s = summarize({0.4, 0.6});
  const double t1 = t_quantile(0.95, 1), t49 = t_quantile(0.95, 49);
  const double r1 = pearson_correlation({1, 2, 3}, {2, 4, 6}), r2 = pearson_correlation({1, 2, 3}, {3, 2, 1});
  const double r3 = pearson_correlation({1, 2, 3}, {1, 2, 2}), r4 = pearson_correlation({1, 2, 3, 4}, {1, 0, 0, 1});
  const std::string detail = "E " + fmt(*s.ci_half_width) + ", t(1) " + fmt(t1) + ", t(49) " + fmt(t49);
  if (std::abs(*s.ci_half_width - 1.2706) > 1e-3 || std::abs(t1 - 12.706) > 1e-3 || std::abs(t49 - 2.0096) > 1e-3)
    return failed(detail);
  if (std::abs(r1 - 1) > 1e-6 || std::abs(r2 + 1) > 1e-6 || std::abs(r3 - std::sqrt(3.0) / 2) > 1e-6 || std::abs(r4) > 1e-6)
    return failed("pearson closed forms");
  return {Outcome::pass, detail};
}

Outcome synthetic_pipeline() {
  const auto plain = load_config(fixture().config, {"paths.output=out_plain"});
  run_pipeline(plain);
  const double acc = read_json_file(plain.output_dir() / "evaluation.json").at("summary").at("mean").get<double>();
  const auto shuffled = load_config(fixture().config, {"paths.output=out_shuffled", "shuffle_prototype_labels=true"});
  run_pipeline(shuffled);
  const double acc_s = read_json_file(shuffled.output_dir() / "evaluation.json").at("summary").at("mean").get<double>();
  const std::string detail = "accuracy " + format_percent(acc) + "%, shuffled prototypes " + format_percent(acc_s) + "%";
  if (acc != 1.0 || acc_s > 0.30) return failed(detail);
  return {Outcome::pass, detail};
}

// External data layout: $ZSAR_EXTERNAL_DATA/{ucf101,hmdb51}/config.json, each a
// pipeline config using the released captions and a paraphrase vector table.
Outcome external_reproduction() {
  const char* root = std::getenv("ZSAR_EXTERNAL_DATA");
  if (!root || !*root) return {Outcome::skip, "ZSAR_EXTERNAL_DATA not set"};
  const fs::path base(root);
  for (const char* ds : {"ucf101", "hmdb51"})
    if (!fs::is_regular_file(base / ds / "config.json"))
      return {Outcome::skip, (base / ds / "config.json").string() + " not found"};
  std::string detail;
  for (const auto& [ds, target] : std::vector<std::pair<std::string, double>>{{"ucf101", 0.491}, {"hmdb51", 0.204}}) {
    const auto c = load_config(base / ds / "config.json", {"paths.output=" + (base / ds / "acceptance_out").string()});
    run_pipeline(c);
    const double acc = read_json_file(c.output_dir() / "evaluation.json").at("summary").at("mean").get<double>();
    detail += ds + " " + format_percent(acc) + "% (target " + format_percent(target) + "); ";
    if (std::abs(acc - target) > 0.010 + 1e-12) return failed(detail);
  }
  auto ctx = open_pipeline(load_config(base / "ucf101" / "config.json"));
  const auto modes = representation_mode_sweep(ctx->data, ctx->settings);
  std::map<std::string, double> mean;
  for (const auto& r : modes.rows) {
    if (!r.stats) return failed(detail + "mode " + r.key.at("mode") + " failed: " + r.error);
    mean[r.key.at("mode")] = r.stats->mean;
  }
  detail += "modes label " + format_percent(mean["label"]) + " < paragraph " + format_percent(mean["paragraph"]) +
            " < sentences " + format_percent(mean["sentences"]);
  if (!(mean["label"] < mean["paragraph"] && mean["paragraph"] < mean["sentences"])) return failed(detail);
  return {Outcome::pass, detail};
}

Outcome determinism() {
  const std::string args = "run --config " + fixture().config.string() + " --set paths.output=out_determinism";
  const fs::path manifest = fixture().root / "out_determinism" / "manifest.json";
  if (run_cli(args) != 0) return failed("first run failed");
  const auto first = read_text_file(manifest);
  if (run_cli(args) != 0) return failed("second run failed");
  if (read_text_file(manifest) != first) return failed("manifests differ");
  return {Outcome::pass, "two CLI runs, identical manifest (" + std::to_string(first.size()) + " bytes)"};
}

}  // namespace

int main() {
  criterion(1, "attention rows are stochastic and match the loop oracle", attention_correctness);
  criterion(2, "analytic gradients match central differences", gradient_checks);
  criterion(3, "decoder outputs are invariant to truncation", decoder_causality);
  criterion(4, "toy captioners can be trained", toy_trainability);
  criterion(5, "classifier equals the exhaustive cosine scan", classifier_oracle);
  criterion(6, "prototype selection equals the brute-force sort", selection_oracle);
  criterion(7, "summary statistics match hand-computed values", statistics);
  criterion(8, "synthetic end-to-end pipeline", synthetic_pipeline);
  criterion(9, "reproduction on external data", external_reproduction);
  criterion(10, "run manifests are byte-identical", determinism);
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: all criteria met")
            << std::endl;
  return failures ? 1 : 0;
}
