#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "headfuse/errors.hpp"
#include "headfuse/grid.hpp"
#include "headfuse/random.hpp"
#include "oracles.hpp"

using namespace headfuse;

namespace {

double max_abs_diff(const GridMap& a, const GridMap& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

}  // namespace

TEST(GridMap, ShapeAndDefaults) {
  GridMap m(3, 4, 5, 1.5);
  EXPECT_EQ(m.size(), 60u);
  EXPECT_EQ(m.cell_count(), 20u);
  EXPECT_EQ(m.validity().size(), 20u);
  EXPECT_TRUE(std::all_of(m.validity().begin(), m.validity().end(), [](auto v) { return v == 1; }));
  EXPECT_DOUBLE_EQ(m.at(2, 3, 4), 1.5);
  EXPECT_EQ(m.index(1, 2, 3), (1u * 4 + 2) * 5 + 3);
}

TEST(GridMap, FromValuesRejectsWrongSizes) {
  EXPECT_THROW(GridMap::from_values(2, 2, 2, std::vector<double>(7)), InvalidInput);
  EXPECT_THROW(GridMap::from_values(1, 2, 2, std::vector<double>(4), std::vector<std::uint8_t>(3)),
               InvalidInput);
  const GridMap m = GridMap::from_values(1, 1, 2, {1.0, 2.0}, {1, 0});
  EXPECT_TRUE(m.valid(0, 0));
  EXPECT_FALSE(m.valid(0, 1));
}

TEST(GridMap, ConcatAndSlice) {
  Rng rng(3);
  const GridMap a = oracle::random_map(rng, 2, 3, 3);
  const GridMap b = oracle::random_map(rng, 3, 3, 3);
  const GridMap ab = concat_channels(a, b);
  ASSERT_EQ(ab.channels(), 5);
  EXPECT_EQ(ab.channel_slice(0, 2).values()[4], a.values()[4]);
  const GridMap tail = ab.channel_slice(2, 3);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(tail.values()[i], b.values()[i]);
}

TEST(Conv2d, IdentityOneByOne) {
  Rng rng(1);
  const GridMap x = oracle::random_map(rng, 3, 5, 4);
  ConvParams p(1, 3, 3);
  for (int c = 0; c < 3; ++c) p.weight[p.weight_index(c, c, 0, 0)] = 1.0;
  EXPECT_EQ(conv2d(x, p).values().size(), x.size());
  const GridMap y = conv2d(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(Conv2d, ZeroWeightsGiveBias) {
  Rng rng(2);
  const GridMap x = oracle::random_map(rng, 2, 4, 4);
  ConvParams p(3, 2, 2);
  p.bias = {0.25, -3.0};
  const GridMap y = conv2d(x, p);
  for (int c = 0; c < 2; ++c) {
    for (double v : y.plane(c)) EXPECT_EQ(v, p.bias[c]);
  }
}

TEST(Conv2d, MatchesLoopOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = trial % 2 ? 3 : 1;
    const GridMap x = oracle::random_map(rng, 2, 4, 4, -1.0, 1.0, 0.2);
    ConvParams p(k, 2, 3);
    oracle::randomize(rng, p);
    const GridMap y = conv2d(x, p);
    const GridMap ref = oracle::conv2d(x, p);
    EXPECT_LT(max_abs_diff(y, ref), 1e-12);
    EXPECT_TRUE(std::equal(y.validity().begin(), y.validity().end(), x.validity().begin()));
  }
}

TEST(Conv2d, LinearWithoutBias) {
  Rng rng(5);
  const GridMap x = oracle::random_map(rng, 2, 5, 6);
  const GridMap z = oracle::random_map(rng, 2, 5, 6);
  ConvParams p(3, 2, 2);
  oracle::randomize(rng, p);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const double a = 0.7, b = -1.3;
  GridMap mix = x;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.values()[i] = a * x.values()[i] + b * z.values()[i];
  const GridMap lhs = conv2d(mix, p);
  const GridMap cx = conv2d(x, p);
  const GridMap cz = conv2d(z, p);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    EXPECT_NEAR(lhs.values()[i], a * cx.values()[i] + b * cz.values()[i], 1e-10);
  }
}

TEST(Conv2d, RejectsShapeMismatch) {
  GridMap x(2, 3, 3);
  EXPECT_THROW(conv2d(x, ConvParams(1, 3, 1)), InvalidInput);
  ConvParams bad(3, 2, 1);
  bad.weight.pop_back();
  EXPECT_THROW(conv2d(x, bad), InvalidInput);
}

TEST(BatchNorm, IdentityParams) {
  Rng rng(6);
  const GridMap x = oracle::random_map(rng, 2, 3, 3);
  BNParams p(2, 0.0);
  const GridMap y = batchnorm_infer(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(BatchNorm, InputAtMeanGivesBeta) {
  BNParams p(2);
  p.mean = {0.3, -2.0};
  p.beta = {1.25, -0.5};
  p.gamma = {3.0, 0.1};
  GridMap x(2, 3, 3);
  for (int c = 0; c < 2; ++c) {
    for (double& v : x.plane(c)) v = p.mean[c];
  }
  const GridMap y = batchnorm_infer(x, p);
  for (int c = 0; c < 2; ++c) {
    for (double v : y.plane(c)) EXPECT_EQ(v, p.beta[c]);
  }
}

TEST(BatchNorm, MatchesScalarOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const GridMap x = oracle::random_map(rng, 3, 4, 5);
    BNParams p(3);
    oracle::randomize(rng, p);
    const GridMap y = batchnorm_infer(x, p);
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < x.cell_count(); ++i) {
        EXPECT_NEAR(y.plane(c)[i], oracle::bn(x.plane(c)[i], p, c), 1e-12);
      }
    }
  }
}

TEST(BatchNorm, RejectsNegativeVariance) {
  BNParams p(1);
  p.var = {-0.5};
  EXPECT_THROW(batchnorm_infer(GridMap(1, 2, 2), p), InvalidInput);
  EXPECT_THROW(batchnorm_infer(GridMap(2, 2, 2), BNParams(1)), InvalidInput);
}

TEST(Activations, ClosedForms) {
  const GridMap x = GridMap::from_values(1, 1, 3, {-1.0, 2.0, 0.0});
  const GridMap r = relu(x);
  EXPECT_EQ(r.values()[0], 0.0);
  EXPECT_EQ(r.values()[1], 2.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  const GridMap s = sigmoid(GridMap::from_values(1, 1, 3, {-800.0, 0.0, 800.0}));
  EXPECT_TRUE(s.all_finite());
  EXPECT_GE(s.values()[0], 0.0);
  EXPECT_LE(s.values()[2], 1.0);
}

TEST(Attention, SingleRowIsIdentity) {
  Matrix x(1, 3);
  x.data = {0.2, -4.0, 9.0};
  const AttentionResult r = scaled_dot_attention(x);
  EXPECT_EQ(r.output, x);
  EXPECT_EQ(r.weights(0, 0), 1.0);
}

TEST(Attention, IdenticalRowsAreFixed) {
  Matrix x(4, 2);
  for (int i = 0; i < 4; ++i) {
    x(i, 0) = 0.6;
    x(i, 1) = -0.1;
  }
  const AttentionResult r = scaled_dot_attention(x);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.output(i, 0), 0.6, 1e-15);
    EXPECT_NEAR(r.output(i, 1), -0.1, 1e-15);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.weights(i, j), 0.25, 1e-15);
  }
}

TEST(Attention, TwoByOneClosedForm) {
  Matrix x(2, 1);
  x.data = {0.0, 1.0};
  const AttentionResult r = scaled_dot_attention(x);
  // Logits [[0, 0], [0, 1]].
  const double e = std::exp(1.0);
  EXPECT_NEAR(r.weights(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(r.weights(1, 1), e / (1.0 + e), 1e-15);
  EXPECT_NEAR(r.output(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(r.output(1, 0), e / (1.0 + e), 1e-15);
}

TEST(Attention, KeyDimScalesLogits) {
  Matrix x(2, 1);
  x.data = {0.0, 2.0};
  const AttentionResult r = scaled_dot_attention(x, 16.0);
  const double z = std::exp(4.0 / 4.0);
  EXPECT_NEAR(r.weights(1, 1), z / (1.0 + z), 1e-15);
}

TEST(Attention, LargeLogitsStayFinite) {
  Matrix x(3, 2);
  x.data = {500.0, 500.0, -500.0, 400.0, 0.0, 1.0};
  const AttentionResult r = scaled_dot_attention(x);
  for (double v : r.output.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Attention, RandomProperties) {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(5));
    const int d = 1 + static_cast<int>(rng.below(4));
    Matrix x(n, d);
    for (double& v : x.data) v = rng.uniform(-3.0, 3.0);
    const AttentionResult r = scaled_dot_attention(x);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        EXPECT_GE(r.weights(i, j), 0.0);
        sum += r.weights(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      for (int c = 0; c < d; ++c) {
        double lo = INFINITY, hi = -INFINITY, combo = 0.0;
        for (int j = 0; j < n; ++j) {
          lo = std::min(lo, x(j, c));
          hi = std::max(hi, x(j, c));
          combo += r.weights(i, j) * x(j, c);
        }
        EXPECT_GE(r.output(i, c), lo - 1e-12);
        EXPECT_LE(r.output(i, c), hi + 1e-12);
        EXPECT_NEAR(r.output(i, c), combo, 1e-12);
      }
    }
  }
}

TEST(Attention, PermutationEquivariant) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4, d = 3;
    Matrix x(n, d);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    std::vector<int> perm{0, 3, 1, 2};
    Matrix px(n, d);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) px(i, c) = x(perm[i], c);
    }
    const Matrix a = scaled_dot_attention(x).output;
    const Matrix b = scaled_dot_attention(px).output;
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) EXPECT_NEAR(b(i, c), a(perm[i], c), 1e-12);
    }
  }
}
