#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "zsar/embed/providers.hpp"
#include "zsar/text/prototypes.hpp"

using namespace zsar;

namespace {

std::string data_file(const std::string& name) { return read_text_file(fs::path(ZSAR_TEST_DATA) / name); }

std::vector<Sentence> lines_as_sentences(const std::string& body) {
  std::vector<Sentence> out;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.emplace_back(line);
  return out;
}

// Counts of a few fixed words; the label "swimming" hits only the first.
class KeywordCounter final : public EmbeddingProvider {
 public:
  std::string id() const override { return "keywords"; }
  std::size_t dimension() const override { return words_.size() + 1; }
  EmbeddingVector embed_text(std::string_view text) const override {
    EmbeddingVector v{std::vector<double>(dimension(), 0.0), id()};
    v.values.back() = 1.0;
    for (const auto& t : content_tokens(text))
      for (std::size_t i = 0; i < words_.size(); ++i)
        if (t == words_[i]) v.values[i] += 1.0;
    return v;
  }

 private:
  std::vector<std::string> words_{"swimming", "pool", "water", "swimmer", "swimmers"};
};

}  // namespace

TEST(SplitSentences, TwoTerminalPeriods) {
  const auto s = split_sentences({"x", "A man runs. He jumps.", "t"});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].text(), "A man runs.");
  EXPECT_EQ(s[1].text(), "He jumps.");
  EXPECT_EQ(s[0].origin(), SentenceOrigin::document);
}

TEST(SplitSentences, NoTerminalPunctuation) {
  const auto s = split_sentences({"fencing", "Fencing is a sport", "t"});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].text(), "Fencing is a sport");
  EXPECT_EQ(s[0].word_count(), 4u);
}

TEST(SplitSentences, ThreeParagraphFixtureHasSevenSentences) {
  const RawDocument doc{"fencing", data_file("three_paragraphs.txt"), "three_paragraphs.txt"};
  const auto s = split_sentences(doc);
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s[1].text(), "Mr. Smith has coached it for years!");
  for (const auto& x : s) EXPECT_EQ(x.word_count(), oracle::word_count(x.text()));
}

TEST(SplitSentences, EmptyBodyIsAnError) {
  EXPECT_THROW(split_sentences({"x", "   \n\n ", "t"}), DataError);
  EXPECT_THROW(split_sentences({"  ", "text", "t"}), DataError);
}

TEST(SplitSentences, InitialsAndQuotes) {
  const auto s = split_sentences({"x", "J. R. R. Tolkien wrote it. \"Really?\" she asked.", "t"});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].text(), "J. R. R. Tolkien wrote it.");
  EXPECT_EQ(s[1].text(), "\"Really?\"");
}

TEST(Contractions, IsntBecomesIsNot) {
  EXPECT_EQ(expand_contractions(std::string_view("isn't")), "is not");
  EXPECT_EQ(expand_contractions(std::string_view("a man runs")), "a man runs");
  const Sentence s = expand_contractions(Sentence("It isn't easy, they're fast."));
  EXPECT_EQ(s.text(), "It is not easy, they are fast.");
  EXPECT_EQ(s.word_count(), 7u);
}

TEST(Contractions, CaseAndTypographicApostrophe) {
  EXPECT_EQ(expand_contractions(std::string_view("Don't")), "Do not");
  EXPECT_EQ(expand_contractions(std::string_view("can\xE2\x80\x99t stop")), "cannot stop");
  EXPECT_FALSE(contains_contraction(expand_contractions(std::string_view("Isn't it? We've won."))));
}

TEST(Contractions, FixtureSentencesHaveNoneLeft) {
  const RawDocument doc{"fencing", data_file("three_paragraphs.txt"), "t"};
  for (const auto& s : document_sentences(doc)) EXPECT_FALSE(contains_contraction(s.text())) << s.text();
}

TEST(FilterMinWords, ThresholdIsInclusive) {
  std::vector<Sentence> in;
  for (std::size_t n : {3u, 9u, 10u, 15u}) {
    std::string t;
    for (std::size_t i = 0; i < n; ++i) t += "w ";
    in.emplace_back(t);
  }
  EXPECT_EQ(word_counts(filter_min_words(in, 10)), (std::vector<std::size_t>{10, 15}));
  EXPECT_EQ(filter_min_words(in, 1), in);
  EXPECT_THROW(filter_min_words(in, 0), ConfigError);
}

TEST(FilterMinWords, MatchesIndependentWordCount) {
  const auto sentences = lines_as_sentences(data_file("selection_20.txt"));
  for (std::size_t m : {1u, 10u, 13u, 15u}) {
    std::size_t expected = 0;
    for (const auto& s : sentences) expected += oracle::word_count(s.text()) >= m;
    EXPECT_EQ(filter_min_words(sentences, m).size(), expected) << m;
  }
}

TEST(FilterMinWords, RaisingThresholdNeverIncreasesSurvivors) {
  const auto sentences = lines_as_sentences(data_file("selection_20.txt"));
  std::size_t prev = sentences.size();
  for (std::size_t m = 1; m < 25; ++m) {
    const std::size_t n = filter_min_words(sentences, m).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(SelectPrototypes, TopTenEqualsExhaustiveSort) {
  const auto sentences = lines_as_sentences(data_file("selection_20.txt"));
  ASSERT_EQ(sentences.size(), 20u);
  const KeywordCounter stub;
  const auto set = select_prototypes("swimming", sentences, stub, 10, 10);
  ASSERT_EQ(set.mode, PrototypeMode::sentences);

  std::vector<Sentence> kept;
  for (const auto& s : sentences)
    if (oracle::word_count(s.text()) >= 10) kept.push_back(s);
  const auto label = stub.embed_text("swimming").values;
  std::vector<double> scores;
  for (const auto& s : kept) scores.push_back(oracle::cosine(stub.embed_text(s.text()).values, label));
  const auto order = oracle::top_k(scores, 10);
  ASSERT_EQ(set.prototypes.size(), order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    EXPECT_EQ(set.prototypes[i].text(), kept[order[i]].text()) << i;
    EXPECT_NEAR(*set.selection_scores[i], scores[order[i]], 1e-12);
  }
  // min selected >= max rejected
  double max_rejected = -1;
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (std::find(order.begin(), order.end(), i) == order.end()) max_rejected = std::max(max_rejected, scores[i]);
  EXPECT_GE(*set.selection_scores.back() + 1e-12, max_rejected);
}

TEST(SelectPrototypes, DuplicatedScoresKeepDocumentOrder) {
  const KeywordCounter stub;
  std::vector<Sentence> s{Sentence("first pool sentence with words enough"),
                          Sentence("second swimming sentence here"),
                          Sentence("third pool sentence with other words"),
                          Sentence("fourth pool line yet again")};
  const auto set = select_prototypes("swimming", s, stub, 1, 3);
  ASSERT_EQ(set.prototypes.size(), 3u);
  EXPECT_EQ(set.prototypes[0].text(), s[1].text());
  EXPECT_EQ(set.prototypes[1].text(), s[0].text());
  EXPECT_EQ(set.prototypes[2].text(), s[2].text());
  EXPECT_EQ(*set.selection_scores[1], *set.selection_scores[2]);
}

TEST(SelectPrototypes, FewerThanMaxReturnsAll) {
  const WordOverlapProvider overlap;
  std::vector<Sentence> s{Sentence("a b c"), Sentence("d e f"), Sentence("g h i"), Sentence("j k l")};
  EXPECT_EQ(select_prototypes("x", s, overlap, 1, 10).prototypes.size(), 4u);
}

TEST(SelectPrototypes, NothingSurvivesIsAConfigErrorNamingTheClass) {
  const WordOverlapProvider overlap;
  try {
    select_prototypes("horse_riding", {Sentence("too short")}, overlap, 10, 10);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("horse_riding"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("min_words=10"), std::string::npos);
  }
}

TEST(SelectPrototypes, DefaultsAreTenAndTen) {
  PrototypeConfig c;
  EXPECT_EQ(c.min_words, 10u);
  EXPECT_EQ(c.max_sentences, 10u);
}

TEST(ParagraphPrototype, JoinsWithSpaces) {
  const auto p = build_paragraph_prototype("x", {Sentence("a."), Sentence("b.")});
  ASSERT_EQ(p.prototypes.size(), 1u);
  EXPECT_EQ(p.prototypes[0].text(), "a. b.");
  EXPECT_EQ(p.mode, PrototypeMode::paragraph);
  EXPECT_THROW(build_paragraph_prototype("x", {}), DataError);
}

TEST(ParagraphPrototype, WordCountIsSumOfParts) {
  const auto sentences = lines_as_sentences(data_file("selection_20.txt"));
  const KeywordCounter stub;
  const auto sel = select_prototypes("swimming", sentences, stub, 10, 10);
  const auto p = build_paragraph_prototype("swimming", sel.prototypes);
  std::size_t sum = 0;
  std::string joined;
  for (const auto& s : sel.prototypes) {
    sum += s.word_count();
    joined += (joined.empty() ? "" : " ") + s.text();
  }
  EXPECT_EQ(p.prototypes[0].word_count(), sum);
  EXPECT_EQ(p.prototypes[0].text(), joined);
}

TEST(LabelPrototype, SeparatorExpansion) {
  EXPECT_EQ(build_label_prototype("fencing").prototypes[0].text(), "fencing");
  EXPECT_EQ(build_label_prototype("horse_riding").prototypes[0].text(), "horse riding");
  EXPECT_EQ(build_label_prototype("YoYo").prototypes[0].text(), "yo yo");
  EXPECT_EQ(build_label_prototype("ApplyEyeMakeup").prototypes[0].text(), "apply eye makeup");
  EXPECT_EQ(build_label_prototype("YoYo").mode, PrototypeMode::label_only);
}

TEST(PrototypeStore, RoundTripIsByteIdentical) {
  testing_support::TempDir dir("store");
  const auto sentences = lines_as_sentences(data_file("selection_20.txt"));
  const KeywordCounter stub;
  std::vector<PrototypeSet> sets{select_prototypes("swimming", sentences, stub, 10, 10),
                                 build_label_prototype("horse_riding")};
  const PrototypeStoreConfig cfg{10, 10, stub.id()};
  const std::string text = format_prototype_store(sets, cfg);
  write_text_file(dir.path() / "p.jsonl", text);
  const auto back = load_prototype_store(dir.path() / "p.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].prototypes, sets[0].prototypes);
  EXPECT_EQ(format_prototype_store(back, cfg), text);
  // determinism of selection
  EXPECT_EQ(format_prototype_store({select_prototypes("swimming", sentences, stub, 10, 10)}, cfg),
            format_prototype_store({sets[0]}, cfg));
}

TEST(PrototypeStore, LoadDescriptionsSortsByLabel) {
  testing_support::TempDir dir("desc");
  write_text_file(dir.path() / "b_class.txt", "Second class text.");
  write_text_file(dir.path() / "a_class.txt", "First class text.");
  write_text_file(dir.path() / "notes.md", "ignored");
  const auto docs = load_descriptions(dir.path());
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].class_label, "a_class");
  EXPECT_THROW(load_descriptions(dir.path() / "missing"), DataError);
}
