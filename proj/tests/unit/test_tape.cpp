#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "headfuse/errors.hpp"
#include "headfuse/tape.hpp"
#include "oracles.hpp"

using namespace headfuse;

TEST(Tape, IdentityConvBiasGradient) {
  Rng rng(1);
  const GridMap x = oracle::random_map(rng, 2, 3, 4);
  ConvParams p(1, 2, 2);
  p.weight[p.weight_index(0, 0, 0, 0)] = 1.0;
  p.weight[p.weight_index(1, 1, 0, 0)] = 1.0;
  Tape t;
  const Var loss = t.sum(t.conv2d(t.input(x), p));
  t.backward(loss);
  const ConvParams g = t.grad(p);
  EXPECT_DOUBLE_EQ(g.bias[0], 12.0);
  EXPECT_DOUBLE_EQ(g.bias[1], 12.0);
}

TEST(Tape, ReluPositiveInputGradientIsOne) {
  Rng rng(2);
  const GridMap x = oracle::random_map(rng, 2, 3, 3, 0.1, 2.0);
  Tape t;
  const Var in = t.input(x);
  t.backward(t.sum(t.relu(in)));
  for (double g : t.grad(in).values()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, UsageErrors) {
  Tape t;
  EXPECT_THROW(t.backward(Var{}), UsageError);
  const Var in = t.input(GridMap(1, 2, 2, 1.0));
  EXPECT_THROW(t.grad(in), UsageError);
  EXPECT_THROW(t.backward(in), UsageError);
  EXPECT_THROW(t.value(Var{}), UsageError);
}

TEST(Tape, ForwardMatchesFreeFunctions) {
  Rng rng(3);
  const GridMap x = oracle::random_map(rng, 2, 4, 4);
  ConvParams c(3, 2, 2);
  oracle::randomize(rng, c);
  BNParams b(2);
  oracle::randomize(rng, b);
  Tape t;
  const Var y = t.sigmoid(t.batchnorm(t.relu(t.conv2d(t.input(x), c)), b));
  EXPECT_EQ(t.value(y), sigmoid(batchnorm_infer(relu(conv2d(x, c)), b)));
}

TEST(Tape, MinMaxNormalize) {
  const GridMap x = GridMap::from_values(1, 1, 4, {2.0, -1.0, 5.0, 9.0});
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  Tape t;
  const GridMap& m = t.value(t.minmax_normalize(t.input(x), mask));
  EXPECT_DOUBLE_EQ(m.values()[0], 0.5);
  EXPECT_DOUBLE_EQ(m.values()[1], 0.0);
  EXPECT_DOUBLE_EQ(m.values()[2], 1.0);
  EXPECT_DOUBLE_EQ(m.values()[3], 0.0);
  const GridMap flat(1, 1, 3, 4.0);
  const std::vector<std::uint8_t> all{1, 1, 1};
  for (double v : t.value(t.minmax_normalize(t.input(flat), all)).values()) EXPECT_EQ(v, 0.5);
}

TEST(Tape, SmoothL1Values) {
  const GridMap pred = GridMap::from_values(1, 1, 3, {0.5, 3.0, 100.0});
  const GridMap target(1, 1, 3, 0.0);
  Tape t;
  const std::vector<std::uint8_t> mask{1, 1, 0};
  // 0.5 * 0.25 and 3 - 0.5, averaged over two selected elements.
  EXPECT_DOUBLE_EQ(t.value(t.smooth_l1(t.input(pred), target, mask)).values()[0], (0.125 + 2.5) / 2);
  const std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_EQ(t.value(t.smooth_l1(t.input(pred), target, none)).values()[0], 0.0);
}

namespace {

// A randomized graph exercising every differentiable op on the tape.
struct Net {
  GridMap x;
  GridMap target;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> elements;
  ConvParams c1, c2, c3;
  BNParams b1, b2;
  int depth = 5;

  double run(Tape& t, Var* input = nullptr) const {
    const Var in = t.input(x);
    if (input) *input = in;
    Var h = t.conv2d(in, c1);
    if (depth >= 2) h = t.batchnorm(h, b1);
    if (depth >= 3) h = t.relu(h);
    Var w = t.sigmoid(t.batchnorm(t.conv2d(h, c2), b2));
    if (depth >= 4) w = t.minmax_normalize(t.add(w, t.conv2d(h, c2)), mask);
    Var mixed = t.concat(t.scale(in, w), t.scale(h, t.one_minus(w)));
    Var out = t.conv2d(mixed, c3);
    if (depth >= 5) out = t.select(mask, out, t.relu(in));
    const Var loss = t.smooth_l1(out, target, elements, 0.5);
    t.backward(loss);
    return t.value(loss).values()[0];
  }
  double loss() const {
    Tape t;
    return run(t);
  }
};

Net random_net(Rng& rng, int depth) {
  const int h = 4, w = 5;
  Net n{oracle::random_map(rng, 2, h, w), oracle::random_map(rng, 2, h, w, -2.0, 2.0), {}, {},
        ConvParams(3, 2, 2), ConvParams(3, 2, 1), ConvParams(1, 4, 2), BNParams(2), BNParams(1), depth};
  for (int i = 0; i < h * w; ++i) n.mask.push_back(rng.uniform() < 0.7);
  for (int i = 0; i < 2 * h * w; ++i) n.elements.push_back(rng.uniform() < 0.8);
  oracle::randomize(rng, n.c1);
  oracle::randomize(rng, n.c2);
  oracle::randomize(rng, n.c3);
  oracle::randomize(rng, n.b1);
  oracle::randomize(rng, n.b2);
  return n;
}

}  // namespace

TEST(Tape, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Net net = random_net(rng, 1 + trial % 5);
    Tape t;
    Var in;
    net.run(t, &in);
    const GridMap gx = t.grad(in);
    const ConvParams g1 = t.grad(net.c1), g2 = t.grad(net.c2), g3 = t.grad(net.c3);
    const BNParams gb1 = t.grad(net.b1), gb2 = t.grad(net.b2);

    auto check = [&](std::vector<double>& params, const std::vector<double>& grads) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double fd = oracle::central_difference(params[i], [&] { return net.loss(); });
        worst = std::max(worst, oracle::relative_error(grads[i], fd));
      }
    };
    check(net.c1.weight, g1.weight);
    check(net.c1.bias, g1.bias);
    check(net.c2.weight, g2.weight);
    check(net.c2.bias, g2.bias);
    check(net.c3.weight, g3.weight);
    check(net.c3.bias, g3.bias);
    if (net.depth >= 2) {
      check(net.b1.gamma, gb1.gamma);
      check(net.b1.beta, gb1.beta);
      check(net.b1.mean, gb1.mean);
      check(net.b1.var, gb1.var);
    }
    check(net.b2.gamma, gb2.gamma);
    check(net.b2.beta, gb2.beta);
    check(net.b2.mean, gb2.mean);
    check(net.b2.var, gb2.var);
    std::vector<double> xs(net.x.values().begin(), net.x.values().end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double fd = oracle::central_difference(net.x.values()[i], [&] { return net.loss(); });
      worst = std::max(worst, oracle::relative_error(gx.values()[i], fd));
    }
  }
  EXPECT_LT(worst, 1e-4);
}
