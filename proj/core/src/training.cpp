#include "headfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "headfuse/errors.hpp"
#include "headfuse/heads.hpp"
#include "headfuse/tape.hpp"

namespace headfuse {

namespace {

void check_sample(const TrainingSample& s, const ComplementaryParams& params) {
  if (!s.reg_ego.same_shape(s.reg_j) || !s.reg_ego.same_shape(s.reg_gt)) {
    throw InvalidInput("training sample maps have inconsistent shapes");
  }
  if (s.reg_ego.channels() != params.reg_channels()) {
    throw InvalidInput("training sample channel count does not match params");
  }
  if (s.positive.size() != s.reg_gt.size()) {
    throw InvalidInput("training sample positive mask has the wrong size");
  }
}

bool all_finite(const ComplementaryParams& p) {
  bool ok = true;
  p.for_each_array([&ok](std::span<const double> s) {
    for (double v : s) ok = ok && std::isfinite(v);
  });
  return ok;
}

}  // namespace

std::vector<std::uint8_t> positive_mask_from_cls(const GridMap& cls_gt) {
  const std::size_t cells = cls_gt.cell_count();
  std::vector<std::uint8_t> mask(cells * kBoxParams * cls_gt.channels(), 0);
  for (int a = 0; a < cls_gt.channels(); ++a) {
    const auto scores = cls_gt.plane(a);
    for (std::size_t i = 0; i < cells; ++i) {
      if (!(scores[i] > 0.5)) continue;
      for (int k = 0; k < kBoxParams; ++k) {
        mask[static_cast<std::size_t>(a * kBoxParams + k) * cells + i] = 1;
      }
    }
  }
  return mask;
}

LossAndGrad complementary_loss_and_grad(const ComplementaryParams& params,
                                        const TrainingSample& sample, const TrainConfig& config) {
  check_sample(sample, params);
  Tape tape;
  const ComplementaryGraph g =
      record_complementary(tape, sample.reg_ego, sample.reg_j, params, config.options);
  const Var loss = tape.smooth_l1(g.fused, sample.reg_gt, sample.positive, config.smooth_l1_beta);
  tape.backward(loss);

  LossAndGrad out{tape.value(loss).values()[0], params};
  out.grad.conv_delta = tape.grad(params.conv_delta);
  out.grad.conv_a = tape.grad(params.conv_a);
  out.grad.bn_a = tape.grad(params.bn_a);
  out.grad.conv_b = tape.grad(params.conv_b);
  out.grad.bn_b = tape.grad(params.bn_b);
  out.grad.conv_out = tape.grad(params.conv_out);
  return out;
}

double complementary_loss(const ComplementaryParams& params, const TrainingSample& sample,
                          const TrainConfig& config) {
  check_sample(sample, params);
  Tape tape;
  const ComplementaryGraph g =
      record_complementary(tape, sample.reg_ego, sample.reg_j, params, config.options);
  const Var loss = tape.smooth_l1(g.fused, sample.reg_gt, sample.positive, config.smooth_l1_beta);
  return tape.value(loss).values()[0];
}

double dataset_loss(const ComplementaryParams& params, const std::vector<TrainingSample>& data,
                    const TrainConfig& config) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : data) total += complementary_loss(params, s, config);
  return total / static_cast<double>(data.size());
}

Adam::Adam(const ComplementaryParams& shape, AdamConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw InvalidInput("Adam: learning rate must be positive");
  const std::size_t n = shape.parameter_count();
  m_.assign(n, 0.0);
  v_.assign(n, 0.0);
}

void Adam::step(ComplementaryParams& params, const ComplementaryParams& grad) {
  ++t_;
  std::vector<double> g;
  g.reserve(m_.size());
  grad.for_each_array([&g](std::span<const double> s) { g.insert(g.end(), s.begin(), s.end()); });
  if (g.size() != m_.size()) throw InvalidInput("Adam: gradient shape does not match params");

  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  params.for_each_array([&](std::span<double> s) {
    for (double& p : s) {
      m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g[k];
      v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double mhat = m_[k] / bc1;
      const double vhat = v_[k] / bc2;
      p -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      ++k;
    }
  });
  for (BNParams* bn : {&params.bn_a, &params.bn_b}) {
    for (double& v : bn->var) v = std::max(v, 0.0);
  }
}

TrainResult train_complementary(ComplementaryParams params,
                                const std::vector<TrainingSample>& data,
                                const TrainConfig& config,
                                const std::function<void(int, double)>& on_epoch) {
  if (data.empty()) throw InvalidInput("train_complementary: empty dataset");
  if (config.epochs < 0) throw InvalidInput("train_complementary: negative epoch count");
  params.validate();
  for (const auto& s : data) check_sample(s, params);

  TrainResult result;
  result.initial_loss = dataset_loss(params, data, config);
  if (!std::isfinite(result.initial_loss)) {
    throw TrainingError("non-finite loss at initialization");
  }

  Adam adam(params, config.adam);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      LossAndGrad lg = complementary_loss_and_grad(params, data[i], config);
      if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
        throw TrainingError("non-finite loss or gradient at epoch " + std::to_string(epoch) +
                            ", sample " + std::to_string(i) + " (loss " +
                            std::to_string(lg.loss) + ")");
      }
      epoch_total += lg.loss;
      adam.step(params, lg.grad);
    }
    const double mean = epoch_total / static_cast<double>(data.size());
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.final_loss = dataset_loss(params, data, config);
  result.params = std::move(params);
  return result;
}

}  // namespace headfuse
