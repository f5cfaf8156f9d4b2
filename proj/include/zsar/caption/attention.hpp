#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "zsar/caption/autograd.hpp"
#include "zsar/caption/parameters.hpp"
#include "zsar/core/error.hpp"
#include "zsar/core/matrix.hpp"

namespace zsar {

// sin/cos positional encoding; d_model must be even.
inline std::vector<double> positional_encoding(std::size_t pos, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0)
    throw ConfigError("positional_encoding: d_model must be even and positive, got " + std::to_string(d_model));
  std::vector<double> pe(d_model);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double angle =
        static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    pe[2 * i] = std::sin(angle);
    pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

inline Matrix positional_encoding_matrix(std::size_t rows, std::size_t d_model) {
  Matrix m(rows, d_model);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto pe = positional_encoding(r, d_model);
    for (std::size_t c = 0; c < d_model; ++c) m(r, c) = pe[c];
  }
  return m;
}

struct AttentionShape {
  std::size_t d_model = 64;
  std::size_t heads = 4;

  void validate() const {
    if (d_model == 0 || heads == 0) throw ConfigError("d_model and heads must be positive");
    if (d_model % heads != 0)
      throw ConfigError("d_model=" + std::to_string(d_model) + " is not divisible by h=" + std::to_string(heads));
  }
  std::size_t d_k() const {
    validate();
    return d_model / heads;
  }
};

namespace layers {

struct HeadVars {
  ag::Var query, key, value;
};

struct MultiHeadVars {
  std::vector<HeadVars> heads;
  ag::Var output;
};

struct FeedForwardVars {
  ag::Var w1, b1, w2, b2;
};

// softmax(q k^T / sqrt(d_k)) v. Weight matrices are appended to `log`.
inline ag::Var attention(ag::Var q, ag::Var k, ag::Var v, bool causal, std::vector<Matrix>* log) {
  if (q.cols() != k.cols())
    throw DataError("attention: Q has " + std::to_string(q.cols()) + " columns, K has " + std::to_string(k.cols()));
  if (k.rows() != v.rows())
    throw DataError("attention: K has " + std::to_string(k.rows()) + " rows, V has " + std::to_string(v.rows()));
  if (k.rows() == 0) throw DataError("attention: no keys");
  const double s = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  ag::Var w = ag::softmax_rows(ag::scale(ag::matmul_bt(q, k), s), causal);
  if (log) log->push_back(w.value());
  return ag::matmul(w, v);
}

inline ag::Var multi_head(ag::Var q, ag::Var k, ag::Var v, const MultiHeadVars& p, bool causal,
                          std::vector<Matrix>* log) {
  std::vector<ag::Var> outs;
  outs.reserve(p.heads.size());
  for (const auto& h : p.heads)
    outs.push_back(attention(ag::matmul(q, h.query), ag::matmul(k, h.key), ag::matmul(v, h.value), causal, log));
  return ag::matmul(outs.size() == 1 ? outs.front() : ag::concat_cols(outs), p.output);
}

inline ag::Var feed_forward(ag::Var u, const FeedForwardVars& p) {
  if (u.cols() != p.w1.rows())
    throw DataError("feed_forward: input width " + std::to_string(u.cols()) + " does not match W1 rows " +
                    std::to_string(p.w1.rows()));
  return ag::add_row(ag::matmul(ag::relu(ag::add_row(ag::matmul(u, p.w1), p.b1)), p.w2), p.b2);
}

}  // namespace layers

// --- plain-matrix entry points ---------------------------------------------

struct AttentionResult {
  Matrix output;
  Matrix weights;
};

inline AttentionResult scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                                    std::size_t d_k) {
  if (q.cols() != d_k || k.cols() != d_k)
    throw DataError("scaled_dot_product_attention: Q/K width must equal d_k=" + std::to_string(d_k));
  ag::Tape tape(false);
  std::vector<Matrix> log;
  ag::Var out = layers::attention(tape.constant(q), tape.constant(k), tape.constant(v), false, &log);
  return {out.value(), log.front()};
}

// Per-head projections W^Q_i, W^K_i, W^V_i (d_model x d_k) and W^O (h d_k x d_model).
struct MultiHeadWeights {
  std::vector<Matrix> query, key, value;
  Matrix output;

  void validate(std::size_t d_model) const {
    const std::size_t h = query.size();
    AttentionShape{d_model, h}.validate();
    if (key.size() != h || value.size() != h) throw ConfigError("multi-head weights: head counts differ");
    const std::size_t d_k = d_model / h;
    for (std::size_t i = 0; i < h; ++i)
      for (const Matrix* m : {&query[i], &key[i], &value[i]})
        if (m->rows() != d_model || m->cols() != d_k)
          throw ConfigError("multi-head weights: head projection must be " + std::to_string(d_model) + "x" +
                            std::to_string(d_k) + ", got " + m->shape_string());
    if (output.rows() != d_model || output.cols() != d_model)
      throw ConfigError("multi-head weights: W^O must be d_model x d_model");
  }
};

inline Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, const MultiHeadWeights& w) {
  w.validate(q.cols());
  ag::Tape tape(false);
  layers::MultiHeadVars p;
  for (std::size_t i = 0; i < w.query.size(); ++i)
    p.heads.push_back({tape.constant(w.query[i]), tape.constant(w.key[i]), tape.constant(w.value[i])});
  p.output = tape.constant(w.output);
  return layers::multi_head(tape.constant(q), tape.constant(k), tape.constant(v), p, false, nullptr).value();
}

inline Matrix self_attention(const Matrix& x, const MultiHeadWeights& w) { return multi_head_attention(x, x, x, w); }

struct FeedForwardWeights {
  Matrix w1, b1, w2, b2;
};

inline Matrix feed_forward(const Matrix& u, const FeedForwardWeights& w) {
  if (w.b1.rows() != 1 || w.b1.cols() != w.w1.cols() || w.w2.rows() != w.w1.cols() || w.b2.rows() != 1 ||
      w.b2.cols() != w.w2.cols())
    throw DataError("feed_forward: inconsistent weight shapes");
  ag::Tape tape(false);
  return layers::feed_forward(tape.constant(u), {tape.constant(w.w1), tape.constant(w.b1), tape.constant(w.w2),
                                                 tape.constant(w.b2)})
      .value();
}

}  // namespace zsar
