#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zsar/caption/attention.hpp"
#include "zsar/caption/autograd.hpp"
#include "zsar/caption/features.hpp"
#include "zsar/caption/parameters.hpp"
#include "zsar/caption/vocabulary.hpp"
#include "zsar/core/io.hpp"
#include "zsar/core/random.hpp"
#include "zsar/text/sentence.hpp"

namespace zsar {

enum class Architecture { transformer, bmt };

inline std::string_view to_string(Architecture a) { return a == Architecture::bmt ? "bmt" : "transformer"; }

inline Architecture parse_architecture(std::string_view s) {
  if (s == "transformer") return Architecture::transformer;
  if (s == "bmt") return Architecture::bmt;
  throw ConfigError("unknown captioner architecture '" + std::string(s) + "' (expected transformer|bmt)");
}

struct CaptionerConfig {
  Architecture architecture = Architecture::transformer;
  std::size_t d_feat = 0;
  std::size_t d_feat_secondary = 0;  // bmt only
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    AttentionShape{d_model, heads}.validate();
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for the positional encoding");
    if (d_feat == 0) throw ConfigError("captioner d_feat must be positive");
    if (architecture == Architecture::bmt && d_feat_secondary == 0)
      throw ConfigError("bmt captioner needs d_feat_secondary > 0");
    if (d_ff == 0 || encoder_layers == 0 || decoder_layers == 0)
      throw ConfigError("d_ff and layer counts must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  json to_json() const {
    return {{"architecture", std::string(to_string(architecture))},
            {"d_feat", d_feat},
            {"d_feat_secondary", d_feat_secondary},
            {"d_model", d_model},
            {"heads", heads},
            {"d_ff", d_ff},
            {"encoder_layers", encoder_layers},
            {"decoder_layers", decoder_layers},
            {"dropout", dropout},
            {"seed", seed}};
  }

  static CaptionerConfig from_json(const json& j) {
    CaptionerConfig c;
    c.architecture = parse_architecture(j.value("architecture", std::string("transformer")));
    c.d_feat = j.value("d_feat", c.d_feat);
    c.d_feat_secondary = j.value("d_feat_secondary", c.d_feat_secondary);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

// Encoder output: V_f^FFN for the transformer; for bmt the visual and the
// audio/semantic outputs of the bi-modal encoder.
struct EncodedVideo {
  Matrix visual;
  std::optional<Matrix> secondary;
};

namespace detail {

struct MhaIds {
  std::vector<std::array<TensorId, 3>> heads;
  TensorId output;
};
struct FfnIds {
  TensorId w1, b1, w2, b2;
};
struct NormIds {
  TensorId gain, bias;
};
struct Sublayer {
  MhaIds attention;
  NormIds norm;
};
struct FfnSublayer {
  FfnIds ffn;
  NormIds norm;
};

struct EncoderStream {
  TensorId input_w, input_b;
  std::vector<Sublayer> self;
  std::vector<Sublayer> cross;  // bmt only
  std::vector<FfnSublayer> ffn;
};

struct DecoderLayer {
  Sublayer self;
  Sublayer cross;    // transformer: over V_f; bmt: over the visual stream
  Sublayer cross_a;  // bmt: over the ASm stream
  FfnSublayer bridge;
  FfnSublayer ffn;
};

struct EncodedVars {
  ag::Var visual;
  std::optional<ag::Var> secondary;
};

}  // namespace detail

class Captioner {
 public:
  Captioner(CaptionerConfig cfg, Vocabulary vocab) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    cfg_.validate();
    Rng rng(derive_seed(cfg_.seed, "captioner.init"));
    build(rng);
  }

  const CaptionerConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  std::size_t bridge_input_width() const { return 2 * cfg_.d_model; }

  // --- tape-level forward -------------------------------------------------

  detail::EncodedVars encode(Forward& f, const VideoFeatures& video) const {
    check_stack(video.visual, cfg_.d_feat, "visual");
    if (cfg_.architecture == Architecture::transformer) {
      ag::Var x = embed_stream(f, visual_, video.visual.features);
      for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
        x = self_sublayer(f, visual_.self[l], x, false);
        x = ffn_sublayer(f, visual_.ffn[l], x);
      }
      return {x, std::nullopt};
    }
    if (!video.secondary) throw DataError("bmt captioner needs a second feature stream for '" + video.visual.video_id + "'");
    check_stack(*video.secondary, cfg_.d_feat_secondary, "secondary");
    if (video.secondary->modality == video.visual.modality)
      throw DataError("bmt streams must have distinct modalities for '" + video.visual.video_id + "'");
    ag::Var v = embed_stream(f, visual_, video.visual.features);
    ag::Var a = embed_stream(f, secondary_, video.secondary->features);
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      ag::Var vs = self_sublayer(f, visual_.self[l], v, false);
      ag::Var as = self_sublayer(f, secondary_.self[l], a, false);
      ag::Var vc = cross_sublayer(f, visual_.cross[l], vs, as, as);
      ag::Var ac = cross_sublayer(f, secondary_.cross[l], as, vs, vs);
      v = ffn_sublayer(f, visual_.ffn[l], vc);
      a = ffn_sublayer(f, secondary_.ffn[l], ac);
    }
    return {v, a};
  }

  // Log-probabilities, one row per prefix position.
  ag::Var decode_log_probs(Forward& f, const std::vector<std::size_t>& prefix, const detail::EncodedVars& enc) const {
    if (prefix.empty() || prefix.front() != Vocabulary::kBos) throw DataError("decoder prefix must start with BOS");
    for (std::size_t id : prefix)
      if (id >= vocab_.size())
        throw DataError("prefix token id " + std::to_string(id) + " out of vocabulary (size " +
                        std::to_string(vocab_.size()) + ")");
    if (cfg_.architecture == Architecture::bmt && !enc.secondary)
      throw DataError("bmt decoder needs both encoder streams");
    ag::Tape& t = f.tape();
    ag::Var y = ag::scale(ag::gather_rows(f.param(embedding_), prefix), std::sqrt(static_cast<double>(cfg_.d_model)));
    y = f.dropout(ag::add(y, t.constant(positional_encoding_matrix(prefix.size(), cfg_.d_model))));
    for (const auto& layer : decoder_) {
      ag::Var s = self_sublayer(f, layer.self, y, true);
      if (cfg_.architecture == Architecture::transformer) {
        ag::Var c = cross_sublayer(f, layer.cross, s, enc.visual, enc.visual);
        y = ffn_sublayer(f, layer.ffn, c);
      } else {
        ag::Var ca = cross_sublayer(f, layer.cross_a, s, *enc.secondary, *enc.secondary);
        ag::Var cv = cross_sublayer(f, layer.cross, s, enc.visual, enc.visual);
        ag::Var joined = ag::concat_cols({ca, cv});
        ag::Var b = ag::layer_norm(ag::add(s, f.dropout(layers::feed_forward(joined, ffn_vars(f, layer.bridge.ffn)))),
                                   f.param(layer.bridge.norm.gain), f.param(layer.bridge.norm.bias));
        y = ffn_sublayer(f, layer.ffn, b);
      }
    }
    return ag::log_softmax_rows(ag::add_row(ag::matmul(y, f.param(generator_w_)), f.param(generator_b_)));
  }

  // --- inference ------------------------------------------------------------

  EncodedVideo encode(const VideoFeatures& video, std::vector<Matrix>* attention_log = nullptr) const {
    ag::Tape tape(false);
    Forward f(tape, params_, nullptr, nullptr, 0.0, attention_log);
    auto enc = encode(f, video);
    EncodedVideo out{enc.visual.value(), std::nullopt};
    if (enc.secondary) out.secondary = enc.secondary->value();
    return out;
  }

  Matrix transformer_encode(const FeatureStack& v) const {
    if (cfg_.architecture != Architecture::transformer) throw ConfigError("transformer_encode on a bmt model");
    return encode(VideoFeatures{v, std::nullopt}).visual;
  }

  std::pair<Matrix, Matrix> bmt_encode(const FeatureStack& v, const FeatureStack& asm_stream) const {
    if (cfg_.architecture != Architecture::bmt) throw ConfigError("bmt_encode on a transformer model");
    auto e = encode(VideoFeatures{v, asm_stream});
    return {std::move(e.visual), std::move(*e.secondary)};
  }

  // Next-token distributions for every prefix position.
  Matrix decode_all(const TokenSequence& prefix, const EncodedVideo& enc,
                    std::vector<Matrix>* attention_log = nullptr) const {
    ag::Tape tape(false);
    Forward f(tape, params_, nullptr, nullptr, 0.0, attention_log);
    detail::EncodedVars ev{tape.constant(enc.visual), std::nullopt};
    if (enc.secondary) ev.secondary = tape.constant(*enc.secondary);
    Matrix p = decode_log_probs(f, prefix.token_ids, ev).value();
    for (double& x : p.values()) x = std::exp(x);
    return p;
  }

  std::vector<double> decode_step(const TokenSequence& prefix, const EncodedVideo& enc) const {
    const Matrix all = decode_all(prefix, enc);
    const auto last = all.row(all.rows() - 1);
    return {last.begin(), last.end()};
  }

  // Greedy decoding from BOS until EOS or max_len generated tokens.
  Sentence generate_caption(const VideoFeatures& video, std::size_t max_len) const {
    if (max_len < 1) throw ConfigError("generate_caption: max_len must be >= 1");
    const EncodedVideo enc = encode(video);
    TokenSequence prefix{{Vocabulary::kBos}};
    std::vector<std::size_t> generated;
    for (std::size_t step = 0; step < max_len; ++step) {
      const auto probs = decode_step(prefix, enc);
      std::size_t best = Vocabulary::kEos;
      for (std::size_t id = Vocabulary::kEos; id < probs.size(); ++id)
        if (probs[id] > probs[best]) best = id;
      if (best == Vocabulary::kEos) break;
      generated.push_back(best);
      prefix.token_ids.push_back(best);
    }
    return Sentence(vocab_.decode(generated), SentenceOrigin::observer);
  }

  // --- persistence ------------------------------------------------------------

  json to_json() const {
    json params = json::object();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Matrix& m = params_.at(i);
      params[params_.name(i)] = {{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.values()}};
    }
    return {{"format", "zsar-captioner-1"}, {"config", cfg_.to_json()}, {"vocabulary", vocab_.tokens()},
            {"params", params}};
  }

  static Captioner from_json(const json& j, std::string_view context = "captioner") {
    if (j.value("format", std::string()) != "zsar-captioner-1")
      throw DataError(std::string(context) + ": not a captioner model file");
    Captioner model(CaptionerConfig::from_json(required<json>(j, "config", context)),
                    Vocabulary::from_tokens(required<std::vector<std::string>>(j, "vocabulary", context)));
    const json& params = required<json>(j, "params", context);
    if (params.size() != model.params_.size())
      throw DataError(std::string(context) + ": expected " + std::to_string(model.params_.size()) +
                      " parameter tensors, found " + std::to_string(params.size()));
    for (std::size_t i = 0; i < model.params_.size(); ++i) {
      const std::string& name = model.params_.name(i);
      if (!params.contains(name)) throw DataError(std::string(context) + ": missing parameter " + name);
      const json& p = params.at(name);
      Matrix& m = model.params_.at(i);
      if (p.at("rows").get<std::size_t>() != m.rows() || p.at("cols").get<std::size_t>() != m.cols())
        throw DataError(std::string(context) + ": parameter " + name + " has the wrong shape");
      const auto values = p.at("values").get<std::vector<double>>();
      if (values.size() != m.size()) throw DataError(std::string(context) + ": parameter " + name + " is truncated");
      std::copy(values.begin(), values.end(), m.values().begin());
    }
    return model;
  }

  void save(const fs::path& path) const { write_text_file(path, to_json().dump() + "\n"); }
  static Captioner load(const fs::path& path) { return from_json(read_json_file(path), path.string()); }

 private:
  void check_stack(const FeatureStack& s, std::size_t dim, const char* which) const {
    if (s.n_c() == 0) throw DataError(std::string(which) + " feature stack '" + s.video_id + "' is empty");
    if (s.dim() != dim)
      throw DataError(std::string(which) + " feature stack '" + s.video_id + "' has dimension " +
                      std::to_string(s.dim()) + ", model expects " + std::to_string(dim));
  }

  // --- layout -------------------------------------------------------------

  detail::MhaIds make_mha(const std::string& p, Rng& rng) {
    detail::MhaIds ids;
    const std::size_t d = cfg_.d_model, dk = d / cfg_.heads;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string hp = p + ".h" + std::to_string(h);
      ids.heads.push_back({params_.add(hp + ".wq", xavier_matrix(d, dk, rng)),
                           params_.add(hp + ".wk", xavier_matrix(d, dk, rng)),
                           params_.add(hp + ".wv", xavier_matrix(d, dk, rng))});
    }
    ids.output = params_.add(p + ".wo", xavier_matrix(d, d, rng));
    return ids;
  }

  detail::NormIds make_norm(const std::string& p) {
    return {params_.add(p + ".ln.gain", Matrix(1, cfg_.d_model, 1.0)), params_.add(p + ".ln.bias", Matrix(1, cfg_.d_model))};
  }

  detail::FfnIds make_ffn(const std::string& p, std::size_t in, Rng& rng) {
    return {params_.add(p + ".w1", xavier_matrix(in, cfg_.d_ff, rng)), params_.add(p + ".b1", Matrix(1, cfg_.d_ff)),
            params_.add(p + ".w2", xavier_matrix(cfg_.d_ff, cfg_.d_model, rng)),
            params_.add(p + ".b2", Matrix(1, cfg_.d_model))};
  }

  detail::EncoderStream make_stream(const std::string& p, std::size_t d_in, bool cross, Rng& rng) {
    detail::EncoderStream s;
    s.input_w = params_.add(p + ".input.w", xavier_matrix(d_in, cfg_.d_model, rng));
    s.input_b = params_.add(p + ".input.b", Matrix(1, cfg_.d_model));
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string lp = p + "." + std::to_string(l);
      s.self.push_back({make_mha(lp + ".self", rng), make_norm(lp + ".self")});
      if (cross) s.cross.push_back({make_mha(lp + ".cross", rng), make_norm(lp + ".cross")});
      s.ffn.push_back({make_ffn(lp + ".ffn", cfg_.d_model, rng), make_norm(lp + ".ffn")});
    }
    return s;
  }

  void build(Rng& rng) {
    const bool bmt = cfg_.architecture == Architecture::bmt;
    visual_ = make_stream("enc.visual", cfg_.d_feat, bmt, rng);
    if (bmt) secondary_ = make_stream("enc.asm", cfg_.d_feat_secondary, true, rng);
    Matrix emb(vocab_.size(), cfg_.d_model);
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    for (double& v : emb.values()) v = s * standard_normal(rng);
    embedding_ = params_.add("dec.embedding", std::move(emb));
    for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string lp = "dec." + std::to_string(l);
      detail::DecoderLayer layer;
      layer.self = {make_mha(lp + ".self", rng), make_norm(lp + ".self")};
      layer.cross = {make_mha(lp + ".cross", rng), make_norm(lp + ".cross")};
      if (bmt) {
        layer.cross_a = {make_mha(lp + ".cross_asm", rng), make_norm(lp + ".cross_asm")};
        layer.bridge = {make_ffn(lp + ".bridge", 2 * cfg_.d_model, rng), make_norm(lp + ".bridge")};
      }
      layer.ffn = {make_ffn(lp + ".ffn", cfg_.d_model, rng), make_norm(lp + ".ffn")};
      decoder_.push_back(std::move(layer));
    }
    generator_w_ = params_.add("gen.w", xavier_matrix(cfg_.d_model, vocab_.size(), rng));
    generator_b_ = params_.add("gen.b", Matrix(1, vocab_.size()));
  }

  // --- sublayers ------------------------------------------------------------

  layers::MultiHeadVars mha_vars(Forward& f, const detail::MhaIds& ids) const {
    layers::MultiHeadVars v;
    for (const auto& h : ids.heads) v.heads.push_back({f.param(h[0]), f.param(h[1]), f.param(h[2])});
    v.output = f.param(ids.output);
    return v;
  }

  layers::FeedForwardVars ffn_vars(Forward& f, const detail::FfnIds& ids) const {
    return {f.param(ids.w1), f.param(ids.b1), f.param(ids.w2), f.param(ids.b2)};
  }

  ag::Var norm(Forward& f, const detail::NormIds& ids, ag::Var x) const {
    return ag::layer_norm(x, f.param(ids.gain), f.param(ids.bias));
  }

  ag::Var embed_stream(Forward& f, const detail::EncoderStream& s, const Matrix& features) const {
    ag::Tape& t = f.tape();
    ag::Var x = ag::add_row(ag::matmul(t.constant(features), f.param(s.input_w)), f.param(s.input_b));
    return f.dropout(ag::add(x, t.constant(positional_encoding_matrix(features.rows(), cfg_.d_model))));
  }

  ag::Var self_sublayer(Forward& f, const detail::Sublayer& s, ag::Var x, bool causal) const {
    ag::Var a = layers::multi_head(x, x, x, mha_vars(f, s.attention), causal, f.attention_log());
    return norm(f, s.norm, ag::add(x, f.dropout(a)));
  }

  ag::Var cross_sublayer(Forward& f, const detail::Sublayer& s, ag::Var q, ag::Var k, ag::Var v) const {
    ag::Var a = layers::multi_head(q, k, v, mha_vars(f, s.attention), false, f.attention_log());
    return norm(f, s.norm, ag::add(q, f.dropout(a)));
  }

  ag::Var ffn_sublayer(Forward& f, const detail::FfnSublayer& s, ag::Var x) const {
    return norm(f, s.norm, ag::add(x, f.dropout(layers::feed_forward(x, ffn_vars(f, s.ffn)))));
  }

  CaptionerConfig cfg_;
  Vocabulary vocab_;
  ParameterSet params_;
  detail::EncoderStream visual_, secondary_;
  TensorId embedding_;
  std::vector<detail::DecoderLayer> decoder_;
  TensorId generator_w_, generator_b_;
};

}  // namespace zsar
