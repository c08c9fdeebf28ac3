#ifndef HEADFUSE_TRAINING_HPP_
#define HEADFUSE_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "headfuse/fusion.hpp"
#include "headfuse/grid.hpp"

namespace headfuse {

// One (ego, warped sender, ground truth) regression triple. `positive` masks
// the regression elements (C_reg*H*W) of anchors that carry a target.
struct TrainingSample {
  GridMap reg_ego;
  GridMap reg_j;
  GridMap reg_gt;
  std::vector<std::uint8_t> positive;
};

// Expands a ground-truth classification map into a regression element mask:
// all 7 targets of every anchor whose score is > 0.5.
std::vector<std::uint8_t> positive_mask_from_cls(const GridMap& cls_gt);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int epochs = 200;
  AdamConfig adam;
  double smooth_l1_beta = 1.0;
  ComplementaryOptions options;
};

struct LossAndGrad {
  double loss = 0.0;
  ComplementaryParams grad;
};

// Mean smooth-L1 between the fused and ground-truth regression maps over
// the sample's positive elements.
double complementary_loss(const ComplementaryParams& params, const TrainingSample& sample,
                          const TrainConfig& config = {});
LossAndGrad complementary_loss_and_grad(const ComplementaryParams& params,
                                        const TrainingSample& sample,
                                        const TrainConfig& config = {});
double dataset_loss(const ComplementaryParams& params, const std::vector<TrainingSample>& data,
                    const TrainConfig& config = {});

class Adam {
 public:
  Adam(const ComplementaryParams& shape, AdamConfig config);
  // One update; running variances are projected back to >= 0 afterwards.
  void step(ComplementaryParams& params, const ComplementaryParams& grad);
  long steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

struct TrainResult {
  ComplementaryParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  // mean per-step loss within each epoch
};

// Batch size 1, samples visited in dataset order every epoch. Throws
// TrainingError on a non-finite loss or gradient.
TrainResult train_complementary(ComplementaryParams params,
                                const std::vector<TrainingSample>& data,
                                const TrainConfig& config = {},
                                const std::function<void(int, double)>& on_epoch = {});

}  // namespace headfuse

#endif  // HEADFUSE_TRAINING_HPP_
