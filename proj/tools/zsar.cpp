#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "zsar/caption/training.hpp"
#include "zsar/classify/classifier.hpp"
#include "zsar/eval/experiment.hpp"
#include "zsar/pipeline/config.hpp"
#include "zsar/pipeline/fixture.hpp"
#include "zsar/pipeline/pipeline.hpp"
#include "zsar/pipeline/report.hpp"

using namespace zsar;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s, ','))
    out.push_back(static_cast<std::size_t>(parse_double(item, "grid value")));
  return out;
}

void write_sweep(const fs::path& dir, const SweepTable& t) {
  write_text_file(dir / ("sweep_" + t.sweep + ".json"), t.to_json().dump(2) + "\n");
  write_text_file(dir / ("sweep_" + t.sweep + ".csv"), t.to_csv());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentence-based zero-shot action recognition toolkit"};
  app.require_subcommand(1);

  // prep-prototypes
  auto* prep = app.add_subcommand("prep-prototypes", "Distil class description documents into prototypes");
  std::string descriptions, prep_out, mode = "sentences", provider_spec = "overlap", classes;
  std::size_t min_words = 10, max_sentences = 10;
  prep->add_option("--descriptions", descriptions, "Directory of <class>.txt documents")->required();
  prep->add_option("--out", prep_out, "Prototype store (JSON lines)")->required();
  prep->add_option("--mode", mode, "sentences | paragraph | label");
  prep->add_option("--min-words", min_words);
  prep->add_option("--max-sentences", max_sentences);
  prep->add_option("--provider", provider_spec, "Selection embedder: overlap[:dim] | table:<path> | toy:<path>");
  prep->add_option("--classes", classes, "Comma-separated subset of classes");

  // caption-train
  auto* ctrain = app.add_subcommand("caption-train", "Train a toy captioning model");
  std::string corpus, arch = "transformer", model_out, history_out, meteor_file, optimizer = "sgd", monitor = "bleu4";
  CaptionerConfig ccfg;
  TrainingSchedule sched;
  ctrain->add_option("--corpus", corpus, "Directory with *.feat files and captions.jsonl")->required();
  ctrain->add_option("--arch", arch, "transformer | bmt");
  ctrain->add_option("--out", model_out, "Model file")->required();
  ctrain->add_option("--d-model", ccfg.d_model);
  ctrain->add_option("--heads", ccfg.heads);
  ctrain->add_option("--d-ff", ccfg.d_ff);
  ctrain->add_option("--encoder-layers", ccfg.encoder_layers);
  ctrain->add_option("--decoder-layers", ccfg.decoder_layers);
  ctrain->add_option("--dropout", ccfg.dropout);
  ctrain->add_option("--seed", ccfg.seed);
  ctrain->add_option("--epochs", sched.max_epochs);
  ctrain->add_option("--patience", sched.patience);
  ctrain->add_option("--min-epochs", sched.min_epochs);
  ctrain->add_option("--batch-size", sched.batch_size);
  ctrain->add_option("--lr", sched.learning_rate);
  ctrain->add_option("--smoothing", sched.label_smoothing);
  ctrain->add_option("--clip-norm", sched.clip_norm);
  ctrain->add_option("--optimizer", optimizer, "sgd | adam");
  ctrain->add_option("--monitor", monitor, "bleu3 | bleu4 | meteor");
  ctrain->add_option("--meteor", meteor_file, "External per-epoch Meteor scores (JSON lines)");
  ctrain->add_option("--history", history_out, "Write the training history here");

  // caption-run
  auto* crun = app.add_subcommand("caption-run", "Caption every video in a feature directory");
  std::string model_in, features_dir, crun_out, observer_id;
  std::size_t max_len = 30;
  crun->add_option("--model", model_in)->required();
  crun->add_option("--features", features_dir)->required();
  crun->add_option("--out", crun_out)->required();
  crun->add_option("--observer-id", observer_id, "Defaults to the model file stem");
  crun->add_option("--max-len", max_len);

  // describe
  auto* describe = app.add_subcommand("describe", "Fuse observer captions per video");
  std::string observers_arg, captions_dir, describe_out, describe_config, labels_file;
  describe->add_option("--observers", observers_arg, "Comma-separated observer ids")->required();
  describe->add_option("--captions-dir", captions_dir, "Directory of <observer>.jsonl caption stores");
  describe->add_option("--config", describe_config, "Take observer definitions from a pipeline config");
  describe->add_option("--labels", labels_file, "Restrict to the videos of this labels file");
  describe->add_option("--out", describe_out)->required();

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Embed prototypes (and optionally fused descriptions)");
  std::string prototypes_in, embed_provider = "overlap", embed_out, fused_in, videos_out;
  embed_cmd->add_option("--prototypes", prototypes_in)->required();
  embed_cmd->add_option("--provider", embed_provider);
  embed_cmd->add_option("--out", embed_out, "Materialised joint space (JSON lines)")->required();
  embed_cmd->add_option("--fused", fused_in);
  embed_cmd->add_option("--videos-out", videos_out);

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Nearest-prototype classification");
  std::string space_in, classify_fused, classify_provider = "overlap", classify_out, aggregation = "max",
                                                 fusion = "concatenate";
  std::size_t threads = 1;
  classify_cmd->add_option("--space", space_in, "Materialised space or prototype store")->required();
  classify_cmd->add_option("--fused", classify_fused)->required();
  classify_cmd->add_option("--provider", classify_provider);
  classify_cmd->add_option("--out", classify_out)->required();
  classify_cmd->add_option("--aggregation", aggregation, "max | mean");
  classify_cmd->add_option("--fusion", fusion, "concatenate | average");
  classify_cmd->add_option("--threads", threads);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run the pipeline under a protocol");
  std::string protocol_in, pipeline_in, evaluate_out;
  std::vector<std::string> overrides;
  evaluate->add_option("--protocol", protocol_in)->required();
  evaluate->add_option("--pipeline", pipeline_in)->required();
  evaluate->add_option("--out", evaluate_out)->required();
  evaluate->add_option("--set", overrides, "key=value config override");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Ablation sweeps");
  std::string sweep, combinations, mw_grid = "3,5,10,15,20", ms_grid = "1,2,3,4,5,6,7,8,9,10", embedders, ablate_out;
  ablate->add_option("--sweep", sweep, "observers | prototypes | modes | embedders")->required();
  ablate->add_option("--pipeline", pipeline_in)->required();
  ablate->add_option("--out", ablate_out)->required();
  ablate->add_option("--combinations", combinations, "Observer subsets, e.g. 'OB1;OB1,OB2'");
  ablate->add_option("--min-words", mw_grid);
  ablate->add_option("--max-sentences", ms_grid);
  ablate->add_option("--embedders", embedders, "name=spec pairs, e.g. 'overlap=overlap,table=table:v.tsv'");
  ablate->add_option("--set", overrides, "key=value config override");

  // report
  auto* report_cmd = app.add_subcommand("report", "Render result tables");
  std::string results_dir;
  report_cmd->add_option("--results", results_dir)->required();

  // run
  auto* run = app.add_subcommand("run", "Full pipeline");
  std::string config_in;
  run->add_option("--config", config_in)->required();
  run->add_option("--set", overrides, "key=value config override");

  auto* validate = app.add_subcommand("validate", "Check a pipeline config");
  validate->add_option("--config", config_in)->required();
  validate->add_option("--set", overrides, "key=value config override");

  auto* fixture = app.add_subcommand("make-fixture", "Write the synthetic 5-class fixture");
  std::string fixture_out;
  FixtureOptions fopt;
  fixture->add_option("--out", fixture_out)->required();
  fixture->add_option("--seed", fopt.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*prep) {
      PrototypeConfig pc{parse_prototype_mode(mode), min_words, max_sentences};
      auto provider = make_provider(provider_spec);
      auto docs = load_descriptions(descriptions);
      std::set<std::string> wanted;
      if (!classes.empty()) {
        const auto names = resolve_classes(split_list(classes, ','), docs);
        wanted.insert(names.begin(), names.end());
      } else {
        for (const auto& d : docs) wanted.insert(d.class_label);
      }
      const auto sets = build_prototype_sets(docs, wanted, pc, *provider);
      write_text_file(prep_out, format_prototype_store(sets, {min_words, max_sentences, provider->id()}));
      std::cout << "wrote " << sets.size() << " prototype sets to " << prep_out << "\n";
    } else if (*ctrain) {
      auto data = load_caption_corpus(corpus);
      ccfg.architecture = parse_architecture(arch);
      ccfg.d_feat = data.front().features.visual.dim();
      if (data.front().features.secondary) ccfg.d_feat_secondary = data.front().features.secondary->dim();
      std::vector<std::string> texts;
      for (const auto& e : data) texts.push_back(e.caption.text());
      Captioner model(ccfg, Vocabulary::build(texts));
      sched.optimizer = parse_optimizer(optimizer);
      sched.monitor = parse_monitored_metric(monitor);
      sched.seed = ccfg.seed;
      MeteorHook hook;
      if (!meteor_file.empty()) hook = meteor_scores_from_file(meteor_file);
      const auto history = train_captioner(model, data, sched, hook, [](const EpochRecord& r, const Captioner&) {
        std::cout << "epoch " << r.epoch << " loss " << r.loss << " bleu3 " << r.bleu3 << " bleu4 " << r.bleu4 << "\n";
      });
      model.save(model_out);
      if (!history_out.empty()) write_text_file(history_out, history.to_json().dump(2) + "\n");
      std::cout << "best epoch " << history.best_epoch << ", saved " << model_out << "\n";
    } else if (*crun) {
      const Captioner model = Captioner::load(model_in);
      if (observer_id.empty()) observer_id = fs::path(model_in).stem().string();
      std::vector<json> rows;
      for (const auto& [id, v] : load_feature_dir(features_dir))
        rows.push_back(caption_record(id, observer_id, model.generate_caption(v, max_len)));
      write_jsonl(crun_out, rows);
      std::cout << "captioned " << rows.size() << " videos\n";
    } else if (*describe) {
      const auto subset = split_list(observers_arg, ',');
      std::vector<ObserverSpec> specs;
      std::shared_ptr<FeatureIndex> features;
      std::size_t cap_len = 30;
      if (!describe_config.empty()) {
        const auto cfg = load_config(describe_config);
        specs = observer_specs(cfg);
        if (auto f = cfg.path("features")) features = std::make_shared<FeatureIndex>(load_feature_dir(*f));
        cap_len = cfg.caption_max_len();
      } else {
        if (captions_dir.empty()) throw ConfigError("describe needs --captions-dir or --config");
        for (const auto& id : subset) specs.push_back({id, ObserverKind::file_backed, fs::path(captions_dir) / (id + ".jsonl")});
      }
      ObserverBank bank(specs, features, cap_len);
      const auto canonical = bank.canonical_subset(subset);
      std::vector<std::string> videos;
      if (!labels_file.empty()) {
        for (const auto& [v, c] : load_labels(labels_file)) videos.push_back(v);
      } else {
        const auto& first = bank.spec(canonical.front());
        if (first.kind != ObserverKind::file_backed) throw ConfigError("describe needs --labels for model observers");
        for (const auto& [v, s] : load_caption_store(first.source, first.observer_id)) videos.push_back(v);
      }
      std::vector<json> rows;
      for (const auto& f : bank.observer_subset(videos, canonical)) rows.push_back(fused_record(f));
      write_jsonl(describe_out, rows);
      std::cout << "fused " << rows.size() << " videos\n";
    } else if (*embed_cmd) {
      auto provider = make_provider(embed_provider);
      const JointSpace space = build_joint_space(load_prototype_store(prototypes_in), *provider);
      write_text_file(embed_out, format_joint_space(space));
      if (!fused_in.empty()) {
        if (videos_out.empty()) throw ConfigError("--fused requires --videos-out");
        std::vector<json> rows;
        for (const auto& f : load_fused(fused_in)) {
          const auto v = embed(f.sentence, *provider);
          rows.push_back({{"video_id", f.video_id}, {"embedder_id", v.embedder_id}, {"vector", v.values}});
        }
        write_jsonl(videos_out, rows);
      }
      std::cout << "embedded " << space.prototype_vectors.size() << " prototypes\n";
    } else if (*classify_cmd) {
      auto provider = make_provider(classify_provider);
      const JointSpace space = load_joint_space(space_in, provider.get());
      const auto results = batch_classify(load_fused(classify_fused), space, *provider,
                                          {parse_aggregation(aggregation), parse_fusion_mode(fusion)}, threads);
      std::vector<json> rows;
      for (const auto& r : results) rows.push_back(result_record(r));
      write_jsonl(classify_out, rows);
      std::cout << "classified " << rows.size() << " videos\n";
    } else if (*evaluate) {
      overrides.push_back("protocol=" + json(fs::absolute(protocol_in).string()).dump());
      overrides.push_back("paths.output=" + json(fs::absolute(evaluate_out).string()).dump());
      run_pipeline(load_config(pipeline_in, overrides));
      std::cout << report(evaluate_out);
    } else if (*ablate) {
      auto ctx = open_pipeline(load_config(pipeline_in, overrides));
      SweepTable table;
      if (sweep == "observers") {
        std::vector<std::vector<std::string>> combos;
        if (combinations.empty()) {
          for (const auto& id : ctx->observers->ids()) combos.push_back({id});
          combos.push_back(ctx->observers->ids());
        } else {
          for (const auto& c : split_list(combinations, ';')) combos.push_back(split_list(c, ','));
        }
        table = observer_combination_sweep(ctx->data, ctx->settings, combos);
      } else if (sweep == "prototypes") {
        table = prototype_param_sweep(ctx->data, ctx->settings, split_sizes(mw_grid), split_sizes(ms_grid));
      } else if (sweep == "modes") {
        table = representation_mode_sweep(ctx->data, ctx->settings);
      } else if (sweep == "embedders") {
        std::vector<NamedProvider> providers;
        if (embedders.empty()) throw ConfigError("--sweep embedders needs --embedders name=spec,...");
        for (const auto& item : split_list(embedders, ',')) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw ConfigError("embedder entry must be name=spec: '" + item + "'");
          providers.push_back({item.substr(0, eq), make_provider(item.substr(eq + 1), &ctx->config)});
        }
        table = embedder_sweep(ctx->data, ctx->settings, providers);
      } else {
        throw ConfigError("unknown sweep '" + sweep + "' (expected observers|prototypes|modes|embedders)");
      }
      write_sweep(ablate_out, table);
      std::cout << render_sweep(table.to_json());
    } else if (*report_cmd) {
      std::cout << report(results_dir);
    } else if (*run) {
      const auto manifest = run_pipeline(load_config(config_in, overrides));
      std::cout << "wrote " << manifest.artifacts.size() << " artifacts, config " << manifest.config_hash << "\n";
    } else if (*validate) {
      const auto errors = validate_config(load_config(config_in, overrides));
      for (const auto& e : errors) std::cerr << "error: " << e << "\n";
      if (!errors.empty()) return exit_code(ErrorKind::config);
      std::cout << "config ok\n";
    } else if (*fixture) {
      const auto info = make_synthetic_fixture(fixture_out, fopt);
      std::cout << "fixture written to " << info.root.string() << " (config " << info.config.string() << ")\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
