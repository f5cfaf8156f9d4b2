#include <gtest/gtest.h>

#include "oracles.hpp"
#include "zsar/caption/attention.hpp"
#include "zsar/core/random.hpp"

using namespace zsar;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * standard_normal(rng);
  return m;
}

MultiHeadWeights random_heads(std::size_t d_model, std::size_t h, Rng& rng) {
  MultiHeadWeights w;
  for (std::size_t i = 0; i < h; ++i) {
    w.query.push_back(random_matrix(d_model, d_model / h, rng, 0.5));
    w.key.push_back(random_matrix(d_model, d_model / h, rng, 0.5));
    w.value.push_back(random_matrix(d_model, d_model / h, rng, 0.5));
  }
  w.output = random_matrix(d_model, d_model, rng, 0.5);
  return w;
}

}  // namespace

TEST(PositionalEncoding, PositionZeroAlternates) {
  const auto pe = positional_encoding(0, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(pe[i], i % 2 ? 1.0 : 0.0);
}

TEST(PositionalEncoding, ScalarValues) {
  const auto pe = positional_encoding(1, 4);
  EXPECT_NEAR(pe[0], 0.841471, 1e-5);
  EXPECT_NEAR(pe[1], 0.540302, 1e-5);
  EXPECT_NEAR(pe[2], 0.0099998, 1e-5);
  EXPECT_NEAR(pe[3], 0.99995, 1e-5);
  for (std::size_t pos : {3u, 17u})
    for (std::size_t i = 0; i < 6; i += 2) {
      const double w = std::pow(10000.0, static_cast<double>(i) / 6.0);
      EXPECT_NEAR(positional_encoding(pos, 6)[i], std::sin(pos / w), 1e-12);
      EXPECT_NEAR(positional_encoding(pos, 6)[i + 1], std::cos(pos / w), 1e-12);
    }
}

TEST(PositionalEncoding, DistinctPositions) {
  std::vector<std::vector<double>> all;
  for (std::size_t p = 0; p < 512; ++p) all.push_back(positional_encoding(p, 8));
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) ASSERT_NE(all[i], all[j]) << i << " " << j;
}

TEST(PositionalEncoding, OddWidthIsAnError) {
  EXPECT_THROW(positional_encoding(1, 5), ConfigError);
  EXPECT_THROW(positional_encoding(1, 0), ConfigError);
}

TEST(ScaledDotProduct, SingleKeyReturnsItsValue) {
  const Matrix q = Matrix::from_rows({{1, 2}, {-3, 0.5}});
  const Matrix k = Matrix::from_rows({{0.1, 0.2}});
  const Matrix v = Matrix::from_rows({{7, 8, 9}});
  const auto r = scaled_dot_product_attention(q, k, v, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.weights(i, 0), 1.0);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(r.output(i, c), v(0, c));
  }
}

TEST(ScaledDotProduct, EqualScoresGiveColumnMean) {
  const Matrix q(2, 3);  // zero queries
  Rng rng(1);
  const Matrix k = random_matrix(4, 3, rng), v = random_matrix(4, 2, rng);
  const auto r = scaled_dot_product_attention(q, k, v, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t j = 0; j < 4; ++j) mean += v(j, c) / 4;
    EXPECT_NEAR(r.output(0, c), mean, 1e-15);
  }
}

TEST(ScaledDotProduct, TwoByTwoHandSoftmax) {
  const Matrix q = Matrix::from_rows({{10, 0}, {0, 10}});
  const Matrix v = Matrix::from_rows({{1, 0}, {0, 1}});
  const auto r = scaled_dot_product_attention(q, q, v, 2);
  const double sigma = 1.0 / (1.0 + std::exp(-100.0 / std::sqrt(2.0)));
  EXPECT_NEAR(r.weights(0, 0), sigma, 1e-12);
  EXPECT_NEAR(r.weights(0, 1), 1 - sigma, 1e-12);
  EXPECT_NEAR(r.weights(1, 1), sigma, 1e-12);
}

TEST(ScaledDotProduct, MatchesLoopOracleOnRandomInstances) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 6), m = 1 + uniform_index(rng, 6), d = 1 + uniform_index(rng, 8);
    const Matrix q = random_matrix(n, d, rng, 2), k = random_matrix(m, d, rng, 2), v = random_matrix(m, 3, rng);
    const auto r = scaled_dot_product_attention(q, k, v, d);
    const auto o = oracle::attention(q, k, v);
    ASSERT_LE(max_abs_difference(r.output, o.output), 1e-9);
    ASSERT_LE(max_abs_difference(r.weights, o.weights), 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < m; ++j) {
        ASSERT_GE(r.weights(i, j), 0.0);
        s += r.weights(i, j);
      }
      ASSERT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(ScaledDotProduct, DimensionMismatch) {
  EXPECT_THROW(scaled_dot_product_attention(Matrix(2, 3), Matrix(2, 3), Matrix(3, 1), 3), DataError);
  EXPECT_THROW(scaled_dot_product_attention(Matrix(2, 3), Matrix(2, 2), Matrix(2, 1), 3), DataError);
}

TEST(MultiHead, SingleHeadIdentityReducesToAttention) {
  Rng rng(3);
  const Matrix x = random_matrix(4, 6, rng), y = random_matrix(5, 6, rng);
  MultiHeadWeights w{{Matrix::identity(6)}, {Matrix::identity(6)}, {Matrix::identity(6)}, Matrix::identity(6)};
  EXPECT_LE(max_abs_difference(multi_head_attention(x, y, y, w), scaled_dot_product_attention(x, y, y, 6).output),
            1e-15);
}

TEST(MultiHead, TwoHeadsMatchPerHeadOracle) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Matrix q = random_matrix(3, 8, rng), kv = random_matrix(5, 8, rng);
    const auto w = random_heads(8, 2, rng);
    Matrix concat(3, 8);
    for (std::size_t h = 0; h < 2; ++h) {
      const auto head = oracle::attention(oracle::product(q, w.query[h]), oracle::product(kv, w.key[h]),
                                          oracle::product(kv, w.value[h]));
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) concat(r, h * 4 + c) = head.output(r, c);
    }
    const Matrix expected = oracle::product(concat, w.output);
    const Matrix got = multi_head_attention(q, kv, kv, w);
    ASSERT_EQ(got.rows(), 3u);
    ASSERT_EQ(got.cols(), 8u);
    ASSERT_LE(max_abs_difference(got, expected), 1e-9);
    EXPECT_EQ(self_attention(q, w), multi_head_attention(q, q, q, w));
  }
}

TEST(MultiHead, IndivisibleWidthIsAConfigError) {
  Rng rng(5);
  auto w = random_heads(6, 3, rng);
  EXPECT_THROW(multi_head_attention(Matrix(2, 7), Matrix(2, 7), Matrix(2, 7), w), ConfigError);
  EXPECT_THROW((AttentionShape{10, 4}.validate()), ConfigError);
}

TEST(SelfAttention, PermutationEquivariant) {
  Rng rng(6);
  const Matrix x = random_matrix(5, 4, rng);
  const auto w = random_heads(4, 2, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Matrix px(5, 4);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) px(r, c) = x(perm[r], c);
  const Matrix out = self_attention(x, w), pout = self_attention(px, w);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(pout(r, c), out(perm[r], c), 1e-12);
}

TEST(SelfAttention, SingleRowIsLinear) {
  Rng rng(7);
  const Matrix x = random_matrix(1, 4, rng);
  const auto w = random_heads(4, 2, rng);
  Matrix concat(1, 4);
  for (std::size_t h = 0; h < 2; ++h) {
    const Matrix v = oracle::product(x, w.value[h]);
    for (std::size_t c = 0; c < 2; ++c) concat(0, 2 * h + c) = v(0, c);
  }
  EXPECT_LE(max_abs_difference(self_attention(x, w), oracle::product(concat, w.output)), 1e-12);
}

TEST(FeedForward, IdentityOnNonNegative) {
  const Matrix u = Matrix::from_rows({{0, 1, 2}, {3, 0.5, 0}});
  const FeedForwardWeights w{Matrix::identity(3), Matrix(1, 3), Matrix::identity(3), Matrix(1, 3)};
  EXPECT_EQ(feed_forward(u, w), u);
}

TEST(FeedForward, NegativePreactivationGivesBias) {
  const Matrix u = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix w1 = Matrix::identity(2) * -1.0;
  const Matrix b2 = Matrix::from_rows({{0.25, -7}});
  const auto out = feed_forward(u, {w1, Matrix(1, 2), Matrix::from_rows({{5, 6}, {7, 8}}), b2});
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(out(r, 0), 0.25);
    EXPECT_EQ(out(r, 1), -7.0);
  }
}

TEST(FeedForward, MatchesRowOracleAndIsPositionwise) {
  Rng rng(8);
  const Matrix u = random_matrix(3, 4, rng);
  const FeedForwardWeights w{random_matrix(4, 5, rng), random_matrix(1, 5, rng), random_matrix(5, 4, rng),
                             random_matrix(1, 4, rng)};
  const Matrix out = feed_forward(u, w);
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> hidden(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = w.b1(0, j);
      for (std::size_t i = 0; i < 4; ++i) acc += u(r, i) * w.w1(i, j);
      hidden[j] = std::max(0.0, acc);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = w.b2(0, c);
      for (std::size_t j = 0; j < 5; ++j) acc += hidden[j] * w.w2(j, c);
      EXPECT_NEAR(out(r, c), acc, 1e-12);
    }
  }
  Matrix swapped = u;
  for (std::size_t c = 0; c < 4; ++c) std::swap(swapped(0, c), swapped(2, c));
  const Matrix sout = feed_forward(swapped, w);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(sout(0, c), out(2, c));
    EXPECT_EQ(sout(1, c), out(1, c));
  }
  EXPECT_THROW(feed_forward(Matrix(2, 3), w), DataError);
}
