#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "headfuse/checkpoint.hpp"
#include "headfuse/errors.hpp"
#include "headfuse/training.hpp"
#include "oracles.hpp"

using namespace headfuse;

namespace {

TrainingSample random_sample(Rng& rng, int channels, int size, double invalid = 0.2) {
  TrainingSample s{oracle::random_map(rng, channels, size, size, -1, 1, invalid),
                   oracle::random_map(rng, channels, size, size, -1, 1, invalid),
                   GridMap(channels, size, size), {}};
  for (std::size_t i = 0; i < s.reg_gt.size(); ++i) {
    s.reg_gt.values()[i] = 0.7 * s.reg_ego.values()[i] + 0.3 * s.reg_j.values()[i];
  }
  s.positive.resize(s.reg_gt.size());
  for (auto& p : s.positive) p = rng.uniform() < 0.6;
  return s;
}

ComplementaryParams perturbed(Rng& rng, int channels) {
  ComplementaryParams p = ComplementaryParams::initialize(channels, rng.next_u64());
  oracle::randomize(rng, p.bn_a);
  oracle::randomize(rng, p.bn_b);
  for (double& b : p.conv_a.bias) b = rng.uniform(-0.5, 0.5);
  for (double& b : p.conv_out.bias) b = rng.uniform(-0.5, 0.5);
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("headfuse_test_" + name);
}

}  // namespace

TEST(PositiveMask, ExpandsAnchorsToSevenTargets) {
  GridMap cls(2, 2, 3);
  cls.at(1, 1, 2) = 1.0;
  cls.at(0, 0, 0) = 0.5;
  const auto mask = positive_mask_from_cls(cls);
  ASSERT_EQ(mask.size(), 14u * 6u);
  std::size_t set = 0;
  for (auto m : mask) set += m;
  EXPECT_EQ(set, 7u);
  for (int k = 0; k < 7; ++k) EXPECT_EQ(mask[static_cast<std::size_t>(7 + k) * 6 + 5], 1);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    const TrainingSample s = random_sample(rng, 2, 5);
    ComplementaryParams p = perturbed(rng, 2);
    const LossAndGrad lg = complementary_loss_and_grad(p, s);
    EXPECT_DOUBLE_EQ(lg.loss, complementary_loss(p, s));
    std::vector<double> grads;
    lg.grad.for_each_array([&](std::span<const double> g) { grads.insert(grads.end(), g.begin(), g.end()); });
    std::size_t k = 0;
    p.for_each_array([&](std::span<double> arr) {
      for (double& v : arr) {
        const double fd = oracle::central_difference(v, [&] { return complementary_loss(p, s); });
        worst = std::max(worst, oracle::relative_error(grads[k++], fd));
      }
    });
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Loss, BypassDatasetHasZeroLossAndGradient) {
  Rng rng(2);
  TrainingSample s = random_sample(rng, 3, 4, 0.0);
  for (auto& v : s.reg_j.validity()) v = 0;
  s.reg_gt = s.reg_ego;
  const ComplementaryParams p = perturbed(rng, 3);
  const LossAndGrad lg = complementary_loss_and_grad(p, s);
  EXPECT_EQ(lg.loss, 0.0);
  lg.grad.for_each_array([](std::span<const double> g) {
    for (double v : g) EXPECT_EQ(v, 0.0);
  });
  TrainConfig cfg;
  cfg.epochs = 5;
  const TrainResult r = train_complementary(p, {s}, cfg);
  EXPECT_EQ(r.params, p);
  EXPECT_EQ(r.final_loss, 0.0);
}

TEST(Adam, StepMatchesHandComputation) {
  ComplementaryParams p = ComplementaryParams::initialize(1, 5);
  ComplementaryParams g = p;
  g.for_each_array([](std::span<double> s) {
    for (double& v : s) v = 0.0;
  });
  g.conv_out.bias[0] = 2.0;
  g.conv_delta.weight[0] = -0.5;
  const ComplementaryParams before = p;
  Adam adam(p, {});
  adam.step(p, g);
  // First step: m_hat = g, v_hat = g^2, so each update is lr * sign(g) up to eps.
  EXPECT_NEAR(p.conv_out.bias[0], before.conv_out.bias[0] - 1e-3 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.conv_delta.weight[0], before.conv_delta.weight[0] + 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(p.conv_a, before.conv_a);
  EXPECT_EQ(adam.steps(), 1);
  EXPECT_THROW(Adam(p, AdamConfig{0.0}), InvalidInput);
}

TEST(Adam, ProjectsVarianceToNonNegative) {
  ComplementaryParams p = ComplementaryParams::initialize(1, 5);
  p.bn_a.var[0] = 1e-4;
  ComplementaryParams g = p;
  g.for_each_array([](std::span<double> s) {
    for (double& v : s) v = 0.0;
  });
  g.bn_a.var[0] = 1.0;
  Adam adam(p, {});
  adam.step(p, g);
  EXPECT_EQ(p.bn_a.var[0], 0.0);
}

TEST(Train, SingleSampleHalvesLoss) {
  Rng rng(3);
  const TrainingSample s = random_sample(rng, 2, 6);
  TrainConfig cfg;
  cfg.epochs = 200;
  const TrainResult r = train_complementary(ComplementaryParams::initialize(2, 42), {s}, cfg);
  EXPECT_EQ(r.epoch_losses.size(), 200u);
  EXPECT_LT(r.final_loss, 0.5 * r.initial_loss);
}

TEST(Train, DeterministicAndCallback) {
  Rng rng(4);
  const std::vector<TrainingSample> data{random_sample(rng, 2, 4), random_sample(rng, 2, 4)};
  TrainConfig cfg;
  cfg.epochs = 3;
  int calls = 0;
  const TrainResult a = train_complementary(ComplementaryParams::initialize(2, 1), data, cfg,
                                            [&](int, double) { ++calls; });
  const TrainResult b = train_complementary(ComplementaryParams::initialize(2, 1), data, cfg);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
}

TEST(Train, ErrorsAreReported) {
  Rng rng(5);
  const ComplementaryParams p = ComplementaryParams::initialize(2, 1);
  EXPECT_THROW(train_complementary(p, {}), InvalidInput);
  TrainingSample bad = random_sample(rng, 2, 4);
  bad.reg_ego.values()[0] = NAN;
  EXPECT_THROW(train_complementary(p, {bad}), TrainingError);
  EXPECT_THROW(train_complementary(p, {random_sample(rng, 3, 4)}), InvalidInput);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(6);
  const ComplementaryParams p = perturbed(rng, 14);
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(p)), p);
  const auto path = temp_file("ckpt.bin");
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint(path), p);
  std::filesystem::remove(path);
}

TEST(Checkpoint, HeaderLayout) {
  const Bytes b = encode_checkpoint(ComplementaryParams::initialize(14, 1));
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "HEADCKPT");
  EXPECT_EQ(b[8], kCheckpointVersion);
  EXPECT_EQ(b[12], 14);
}

TEST(Checkpoint, CorruptInputsRaiseParseError) {
  const Bytes good = encode_checkpoint(ComplementaryParams::initialize(2, 1));
  Bytes bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), ParseError);
  Bytes bad_version = good;
  bad_version[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), ParseError);
  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, good.size() - 1}) {
    const Bytes truncated(good.begin(), good.begin() + static_cast<long>(cut));
    try {
      decode_checkpoint(truncated);
      ADD_FAILURE() << "truncation at " << cut << " accepted";
    } catch (const ParseError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
  Bytes trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), ParseError);
  EXPECT_THROW(load_checkpoint(temp_file("does_not_exist.bin")), ConfigError);
}
