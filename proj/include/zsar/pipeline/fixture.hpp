#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "zsar/caption/training.hpp"
#include "zsar/core/io.hpp"
#include "zsar/observers/observers.hpp"

namespace zsar {

struct FixtureClass {
  const char* label;
  const char* description;
  const char* observer_caption;                 // what the trained OB1 learns to say
  std::array<const char*, 4> file_captions;     // OB2 variants
};

inline const std::array<FixtureClass, 5>& fixture_classes() {
  static const std::array<FixtureClass, 5> classes = {{
      {"cutting_in_kitchen",
       "Cutting in the kitchen means slicing vegetables with a sharp knife on a wooden cutting board. "
       "A chef holds the knife firmly and keeps the fingers of the other hand curled. "
       "Good knives matter.\n\n"
       "Onions, carrots and peppers are cut into thin slices or small cubes before cooking in the kitchen. "
       "The cutting board shouldn't slip, so a damp towel is placed under the board. "
       "Speed comes later.\n\n"
       "Professional chefs practise knife cuts such as julienne and dice for hours in a busy kitchen. "
       "Sharp blades cut vegetables cleanly and are safer than dull knives in the kitchen.",
       "a chef cuts vegetables with a knife on a board .",
       {"someone is cutting an onion in a kitchen .", "a cook slices carrots on a cutting board .",
        "hands chop vegetables with a sharp knife .", "a chef dices peppers in the kitchen ."}},
      {"fencing",
       "Fencing is a combat sport in which two fencers fight with swords on a long narrow piste. "
       "Each fencer wears a mask, a white jacket and a glove on the sword hand. "
       "Points decide bouts.\n\n"
       "A fencer scores a touch by hitting the opponent with the tip of the sword or blade. "
       "The three fencing weapons are the foil, the epee and the sabre, each with its own target area. "
       "Referees watch closely.\n\n"
       "Fencers move forward and backward along the piste with quick footwork and sudden lunges. "
       "Electric scoring boxes light up when a fencer's blade touches the opponent's jacket.",
       "two fencers fight with swords on a piste .",
       {"two fencers duel with blades .", "a fencer lunges at an opponent with a sword .",
        "fencers in white masks cross swords .", "an epee fencer attacks on the piste ."}},
      {"horse_riding",
       "Horse riding is the skill of sitting on a horse and guiding it with the reins and the legs. "
       "A rider uses a saddle and stirrups to stay balanced while the horse walks, trots or gallops. "
       "Helmets protect riders.\n\n"
       "Riders often gallop a horse across a grassy field or jump over fences in an arena. "
       "The rider holds the reins lightly and moves with the rhythm of the horse. "
       "Horses need care.\n\n"
       "Before riding, the rider brushes the horse and checks that the saddle and bridle fit well. "
       "It's common for a new rider to learn horse riding at a walk before trying to gallop.",
       "a rider on a horse gallops across a grassy field .",
       {"a woman is riding a brown horse .", "a rider trots a horse around an arena .",
        "someone rides a horse with a saddle .", "a jockey gallops on a horse ."}},
      {"playing_guitar",
       "Playing guitar means pressing the strings on the fretboard while strumming or picking them with the other hand. "
       "A guitarist forms chords with the fingers and strums the strings to make music. "
       "Practice builds calluses.\n\n"
       "Acoustic and electric guitars both have six strings tuned to different notes. "
       "The guitarist often sings along while playing guitar chords and strumming a steady rhythm. "
       "Songs need chords.\n\n"
       "Many players learn guitar by practising simple chords and scales for a few minutes every day. "
       "A guitar pick helps a guitarist strum the strings evenly and play fast melodies.",
       "a man plays a guitar and strums the strings .",
       {"a guitarist strums an acoustic guitar .", "someone is playing guitar chords .",
        "a musician picks the strings of a guitar .", "fingers press chords on a guitar ."}},
      {"swimming",
       "Swimming is moving through water by using the arms and legs, usually in a swimming pool or the sea. "
       "A swimmer breathes to the side and kicks the legs while the arms pull through the water. "
       "Goggles protect eyes.\n\n"
       "Competitive swimmers race in pool lanes using freestyle, backstroke, breaststroke or butterfly strokes. "
       "Each swimmer turns at the wall of the pool and pushes off under the water. "
       "Lanes keep order.\n\n"
       "Swimming lessons teach children to float and to swim safely in deep water. "
       "A strong swimmer can swim many lengths of the pool with smooth and steady strokes.",
       "a swimmer moves through the water of a pool .",
       {"a swimmer swims laps in a pool .", "someone is swimming freestyle in the water .",
        "a girl swims across the pool .", "swimmers race in pool lanes ."}},
  }};
  return classes;
}

struct FixtureOptions {
  std::size_t videos_per_class = 20;
  std::size_t train_per_class = 4;
  std::size_t n_c = 4;
  std::size_t d_feat = 16;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

struct FixtureInfo {
  fs::path root;
  fs::path config;
  TrainingHistory observer_history;
};

// Writes the 5-class synthetic dataset: class descriptions, cluster-structured
// features, labels, a file-backed caption store (OB2), a training corpus and
// a trained toy transformer observer (OB1), a protocol and a run config.
inline FixtureInfo make_synthetic_fixture(const fs::path& root, const FixtureOptions& opt = {}) {
  const auto& classes = fixture_classes();
  fs::create_directories(root);
  SyntheticFeatureGenerator gen(classes.size(), opt.d_feat, opt.noise, derive_seed(opt.seed, "fixture.features"));
  std::vector<json> labels, ob2;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    write_text_file(root / "descriptions" / (std::string(classes[k].label) + ".txt"),
                    std::string(classes[k].description) + "\n");
    for (std::size_t i = 0; i < opt.videos_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "v_%s_%02zu", classes[k].label, i);
      write_video_features(root / "features", {gen.sample(k, id, opt.n_c), std::nullopt});
      labels.push_back({{"video_id", id}, {"class", classes[k].label}});
      ob2.push_back(caption_record(id, "OB2", Sentence(classes[k].file_captions[i % 4], SentenceOrigin::observer)));
    }
  }
  write_jsonl(root / "labels.jsonl", labels);
  write_jsonl(root / "captions" / "OB2.jsonl", ob2);

  std::vector<CaptionExample> corpus;
  std::vector<json> corpus_captions;
  std::vector<std::string> texts;
  for (std::size_t k = 0; k < classes.size(); ++k)
    for (std::size_t i = 0; i < opt.train_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "t_%s_%02zu", classes[k].label, i);
      VideoFeatures vf{gen.sample(k, id, opt.n_c), std::nullopt};
      write_video_features(root / "corpus", vf);
      corpus_captions.push_back({{"video_id", id}, {"caption", classes[k].observer_caption}});
      corpus.push_back({std::move(vf), Sentence(classes[k].observer_caption, SentenceOrigin::document)});
      texts.emplace_back(classes[k].observer_caption);
    }
  write_jsonl(root / "corpus" / "captions.jsonl", corpus_captions);

  CaptionerConfig cc;
  cc.d_feat = opt.d_feat;
  cc.d_model = 32;
  cc.heads = 4;
  cc.d_ff = 64;
  cc.seed = derive_seed(opt.seed, "fixture.ob1");
  Captioner ob1(cc, Vocabulary::build(texts));
  TrainingSchedule schedule;
  schedule.max_epochs = 200;
  schedule.patience = 200;
  schedule.target_metric = 1.0;
  schedule.seed = cc.seed;
  FixtureInfo info{root, root / "config.json", train_captioner(ob1, corpus, schedule)};
  ob1.save(root / "models" / "OB1.json");

  write_text_file(root / "protocol.json",
                  json{{"name", "zero_fifty"}, {"fraction", 1.0}, {"n_runs", 1}, {"seed", opt.seed}}.dump(2) + "\n");
  const json config = {
      {"dataset", "synthetic"},
      {"seed", opt.seed},
      {"data_root", "."},
      {"paths",
       {{"descriptions", "descriptions"},
        {"features", "features"},
        {"captions", "captions"},
        {"labels", "labels.jsonl"},
        {"output", "out"}}},
      {"observers", json::array({{{"id", "OB1"}, {"kind", "toy_transformer"}, {"source", "models/OB1.json"}},
                                 {{"id", "OB2"}, {"kind", "file_backed"}}})},
      {"prototypes", {{"mode", "sentences"}, {"min_words", 10}, {"max_sentences", 10}}},
      {"embedders", {{"selection", "overlap"}, {"space", "overlap"}}},
      {"classifier", {{"aggregation", "max"}, {"fusion", "concatenate"}}},
      {"protocol", "protocol.json"},
      {"caption_max_len", 20}};
  write_text_file(info.config, config.dump(2) + "\n");
  return info;
}

}  // namespace zsar
