#include <gtest/gtest.h>

#include "oracles.hpp"
#include "zsar/classify/classifier.hpp"
#include "zsar/core/random.hpp"
#include "zsar/embed/providers.hpp"
#include "zsar/eval/protocol.hpp"

using namespace zsar;

namespace {

struct RandomWorld {
  std::shared_ptr<VectorTableProvider> provider = std::make_shared<VectorTableProvider>("rand", 6);
  std::vector<PrototypeSet> sets;
  std::vector<FusedDescription> videos;

  RandomWorld(std::size_t classes, std::size_t protos, std::size_t n_videos, std::uint64_t seed) {
    Rng rng(seed);
    auto vec = [&] {
      std::vector<double> v(6);
      for (double& x : v) x = standard_normal(rng);
      return v;
    };
    for (std::size_t c = 0; c < classes; ++c) {
      PrototypeSet s{"class_" + std::string(1, static_cast<char>('a' + c)), PrototypeMode::sentences, {}, {}};
      for (std::size_t p = 0; p < protos; ++p) {
        const std::string text = s.class_label + " prototype " + std::to_string(p);
        provider->insert(text, vec());
        s.prototypes.emplace_back(text);
        s.selection_scores.emplace_back(std::nullopt);
      }
      sets.push_back(s);
    }
    for (std::size_t v = 0; v < n_videos; ++v) {
      const std::string text = "video " + std::to_string(v) + " text";
      provider->insert(text, vec());
      videos.push_back(fuse("vid" + std::to_string(v), {{"OB1", Sentence(text)}}));
    }
  }
};

// Exhaustive scan: global maximum over every (video, prototype) pair, ties
// to the smallest label.
std::pair<std::string, double> exhaustive(const FusedDescription& v, const std::vector<PrototypeSet>& sets,
                                          const EmbeddingProvider& p) {
  const auto u = p.embed_text(v.sentence.text()).values;
  double best = -2;
  std::string label;
  for (const auto& s : sets)
    for (const auto& proto : s.prototypes) {
      const double c = oracle::cosine(u, p.embed_text(proto.text()).values);
      if (c > best + 1e-14 || (std::abs(c - best) <= 1e-14 && s.class_label < label)) {
        best = c;
        label = s.class_label;
      }
    }
  return {label, best};
}

}  // namespace

TEST(Disjoint, Cases) {
  EXPECT_TRUE(validate_disjoint({"a", "b"}, {"c"}).pass);
  const auto r = validate_disjoint({"a"}, {"a"});
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.overlap, (std::vector<std::string>{"a"}));
  EXPECT_FALSE(validate_disjoint({"HorseRiding"}, {"horse_riding"}).pass);
  EXPECT_TRUE(validate_disjoint({}, truze_ucf101_test_classes()).pass);
  EXPECT_EQ(validate_disjoint({"x", "y"}, {"y", "z"}).overlap, validate_disjoint({"y", "z"}, {"x", "y"}).overlap);
}

TEST(JointSpace, VectorsEqualDirectEmbeddings) {
  RandomWorld w(34, 10, 0, 1);
  const auto space = build_joint_space(w.sets, *w.provider);
  EXPECT_EQ(space.prototype_vectors.size(), 340u);
  EXPECT_EQ(space.classes().size(), 34u);
  for (const auto& p : space.prototype_vectors) EXPECT_EQ(p.vector, embed(p.text, *w.provider));
}

TEST(JointSpace, LabelOnlyHasOneVectorPerClass) {
  const WordOverlapProvider overlap(32);
  const auto space = build_joint_space({build_label_prototype("fencing"), build_label_prototype("horse_riding")}, overlap);
  EXPECT_EQ(space.prototype_vectors.size(), 2u);
}

TEST(JointSpace, EmbeddingFailureNamesTheClass) {
  VectorTableProvider empty("t", 2);
  try {
    build_joint_space({build_label_prototype("fencing")}, empty);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("fencing"), std::string::npos);
  }
}

TEST(JointSpace, FileRoundTrip) {
  testing_support::TempDir dir("space");
  RandomWorld w(3, 2, 0, 2);
  const auto space = build_joint_space(w.sets, *w.provider);
  write_text_file(dir.path() / "s.jsonl", format_joint_space(space));
  const auto back = load_joint_space(dir.path() / "s.jsonl", nullptr);
  EXPECT_EQ(format_joint_space(back), format_joint_space(space));
  write_text_file(dir.path() / "p.jsonl", format_prototype_store(w.sets, {10, 10, "rand"}));
  EXPECT_THROW(load_joint_space(dir.path() / "p.jsonl", nullptr), ConfigError);
  EXPECT_EQ(format_joint_space(load_joint_space(dir.path() / "p.jsonl", w.provider.get())), format_joint_space(space));
}

TEST(Classify, SingleClassAlwaysWins) {
  RandomWorld w(1, 2, 10, 3);
  const auto space = build_joint_space(w.sets, *w.provider);
  for (const auto& v : w.videos) EXPECT_EQ(classify(v, space, *w.provider).predicted, "class_a");
}

TEST(Classify, IdenticalTextGivesSimilarityOne) {
  const WordOverlapProvider overlap(128);
  PrototypeSet s{"fencing", PrototypeMode::sentences, {Sentence("two fencers lunge with swords")}, {0.5}};
  const auto space = build_joint_space({s, build_label_prototype("swimming")}, overlap);
  const auto r = classify(fuse("v", {{"OB1", Sentence("two fencers lunge with swords")}}), space, overlap);
  EXPECT_EQ(r.predicted, "fencing");
  EXPECT_NEAR(r.best_similarity, 1.0, 1e-15);
  EXPECT_EQ(r.nearest_prototype_index, 0u);
}

TEST(Classify, MatchesExhaustiveScan) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    RandomWorld w(5, 3, 30, seed);  // 450 pairs
    const auto space = build_joint_space(w.sets, *w.provider);
    for (const auto& v : w.videos) {
      const auto r = classify(v, space, *w.provider);
      const auto [label, best] = exhaustive(v, w.sets, *w.provider);
      ASSERT_EQ(r.predicted, label);
      ASSERT_NEAR(r.best_similarity, best, 1e-12);
      for (const auto& s : w.sets) {
        double m = -2;
        for (const auto& p : s.prototypes)
          m = std::max(m, oracle::cosine(w.provider->embed_text(v.sentence.text()).values,
                                         w.provider->embed_text(p.text()).values));
        ASSERT_NEAR(r.per_class_best.at(s.class_label), m, 1e-12);
      }
    }
  }
}

TEST(Classify, ArgmaxInvariantUnderPositiveRescaling) {
  RandomWorld w(5, 3, 30, 7);
  const auto space = build_joint_space(w.sets, *w.provider);
  JointSpace scaled = space;
  Rng rng(70);
  for (auto& p : scaled.prototype_vectors) {
    const double beta = uniform(rng, 0.001, 1000);
    for (double& x : p.vector.values) x *= beta;
  }
  for (const auto& v : w.videos) {
    auto u = embed(v.sentence, *w.provider);
    const auto base = classify_vector(v.video_id, u, space);
    const double alpha = uniform(rng, 0.001, 1000);
    for (double& x : u.values) x *= alpha;
    EXPECT_EQ(classify_vector(v.video_id, u, scaled).predicted, base.predicted);
  }
}

TEST(Classify, TiesGoToSmallestLabel) {
  VectorTableProvider t("t", 2);
  t.insert("x", {1, 0});
  t.insert("p", {1, 1});
  t.insert("q", {1, -1});
  PrototypeSet zeta{"zeta", PrototypeMode::sentences, {Sentence("p")}, {std::nullopt}};
  PrototypeSet alpha{"alpha", PrototypeMode::sentences, {Sentence("q")}, {std::nullopt}};
  const auto space = build_joint_space({zeta, alpha}, t);
  EXPECT_EQ(classify(fuse("v", {{"OB1", Sentence("x")}}), space, t).predicted, "alpha");
}

TEST(Classify, RemovingANonNearestPrototype) {
  RandomWorld w(4, 3, 20, 8);
  const auto space = build_joint_space(w.sets, *w.provider);
  for (const auto& v : w.videos) {
    const auto r = classify(v, space, *w.provider);
    for (std::size_t drop = 0; drop < space.prototype_vectors.size(); ++drop) {
      const auto& dropped = space.prototype_vectors[drop];
      if (dropped.class_label == r.predicted && dropped.prototype_index == r.nearest_prototype_index) continue;
      JointSpace less = space;
      less.prototype_vectors.erase(less.prototype_vectors.begin() + static_cast<std::ptrdiff_t>(drop));
      const auto r2 = classify(v, less, *w.provider);
      for (const auto& [c, s] : r2.per_class_best) {
        if (c == dropped.class_label)
          EXPECT_LE(s, r.per_class_best.at(c));
        else
          EXPECT_EQ(s, r.per_class_best.at(c));
      }
    }
  }
}

TEST(Classify, MeanAggregationAndAverageFusion) {
  VectorTableProvider t("t", 2);
  t.insert("a1", {1, 0});
  t.insert("a2", {-1, 0.1});
  t.insert("b1", {0.8, 0.6});
  t.insert("u", {1, 0});
  t.insert("w", {0, 1});
  t.insert("u w", {1, 1});
  PrototypeSet a{"a", PrototypeMode::sentences, {Sentence("a1"), Sentence("a2")}, {}};
  PrototypeSet b{"b", PrototypeMode::sentences, {Sentence("b1")}, {}};
  const auto space = build_joint_space({a, b}, t);
  const auto video = fuse("v", {{"OB1", Sentence("u")}, {"OB2", Sentence("w")}});
  EXPECT_EQ(video.sentence.text(), "u w");
  ClassifyOptions opt;
  EXPECT_EQ(classify(fuse("v", {{"OB1", Sentence("u")}}), space, t, opt).predicted, "a");
  opt.aggregation = Aggregation::mean;
  EXPECT_EQ(classify(fuse("v", {{"OB1", Sentence("u")}}), space, t, opt).predicted, "b");
  opt.fusion = FusionMode::average;
  EXPECT_EQ(embed_fused(video, t, FusionMode::average).values, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(parse_aggregation("mean"), Aggregation::mean);
  EXPECT_THROW(parse_fusion_mode("sum"), ConfigError);
}

TEST(Classify, EmbedderMismatchAndZeroNorm) {
  RandomWorld w(2, 1, 1, 9);
  const auto space = build_joint_space(w.sets, *w.provider);
  const WordOverlapProvider other(6);
  EXPECT_THROW(classify(w.videos[0], space, other), ConfigError);
  w.provider->insert("zero", {0, 0, 0, 0, 0, 0});
  EXPECT_THROW(classify(fuse("z", {{"OB1", Sentence("zero")}}), space, *w.provider), NumericError);
}

TEST(BatchClassify, ParallelEqualsSequential) {
  RandomWorld w(5, 3, 200, 11);
  const auto space = build_joint_space(w.sets, *w.provider);
  const auto seq = batch_classify(w.videos, space, *w.provider, {}, 1);
  const auto par = batch_classify(w.videos, space, *w.provider, {}, 8);
  ASSERT_EQ(seq.size(), 200u);
  EXPECT_EQ(seq, par);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(seq[i], classify(w.videos[i], space, *w.provider));
  EXPECT_TRUE(batch_classify({}, space, *w.provider).empty());
}

TEST(BatchClassify, FirstFailureCarriesVideoId) {
  RandomWorld w(2, 1, 20, 12);
  const auto space = build_joint_space(w.sets, *w.provider);
  auto videos = w.videos;
  videos[13] = fuse("broken", {{"OB1", Sentence("not in the table")}});
  videos[17] = fuse("later", {{"OB1", Sentence("also missing")}});
  try {
    batch_classify(videos, space, *w.provider, {}, 4);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'broken'"), std::string::npos);
  }
}

TEST(Results, RoundTrip) {
  testing_support::TempDir dir("results");
  RandomWorld w(3, 2, 5, 13);
  const auto space = build_joint_space(w.sets, *w.provider);
  const auto res = batch_classify(w.videos, space, *w.provider);
  std::vector<json> rows;
  for (const auto& r : res) rows.push_back(result_record(r));
  write_jsonl(dir.path() / "r.jsonl", rows);
  const auto back = load_results(dir.path() / "r.jsonl");
  ASSERT_EQ(back.size(), res.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    EXPECT_EQ(back[i].predicted, res[i].predicted);
    EXPECT_EQ(back[i].best_similarity, res[i].best_similarity);
    EXPECT_EQ(back[i].per_class_best, res[i].per_class_best);
  }
}

TEST(Confusion, DiagonalSingleColumnAndRowSums) {
  std::map<std::string, std::string> truth{{"v1", "a"}, {"v2", "b"}, {"v3", "b"}, {"v4", "c"}};
  std::vector<ClassificationResult> perfect, one;
  for (const auto& [v, c] : truth) {
    perfect.push_back({v, c, 1.0, 0, {}});
    one.push_back({v, "b", 1.0, 0, {}});
  }
  const auto m = confusion_matrix(perfect, truth);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(m.counts[r][c] > 0, r == c);
  EXPECT_EQ(m.row_sum(m.index_of("b")), 2u);
  const auto m1 = confusion_matrix(one, truth);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(m1.counts[r][m1.index_of("b")], m1.row_sum(r));
  }
  EXPECT_DOUBLE_EQ(m1.class_accuracy(m1.index_of("b")), 1.0);
  EXPECT_DOUBLE_EQ(m1.class_accuracy(m1.index_of("a")), 0.0);
  perfect.push_back({"ghost", "a", 1.0, 0, {}});
  EXPECT_THROW(confusion_matrix(perfect, truth), DataError);
}

TEST(Confusion, GroupedLayoutRecount) {
  const std::vector<std::string> order{"horse_race", "horse_riding", "pommel_horse", "parallel_bars", "uneven_bars"};
  Rng rng(5);
  std::map<std::string, std::string> truth;
  std::vector<ClassificationResult> res;
  for (int i = 0; i < 300; ++i) {
    const std::string v = "v" + std::to_string(i);
    truth[v] = order[uniform_index(rng, 5)];
    res.push_back({v, order[uniform_index(rng, 5)], 0, 0, {}});
  }
  const auto m = confusion_matrix(res, truth, order);
  EXPECT_EQ(m.classes, order);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      std::size_t n = 0;
      for (const auto& x : res) n += truth[x.video_id] == order[r] && x.predicted == order[c];
      EXPECT_EQ(m.counts[r][c], n);
    }
}
