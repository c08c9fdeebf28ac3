#ifndef HEADFUSE_FUSION_HPP_
#define HEADFUSE_FUSION_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "headfuse/geometry.hpp"
#include "headfuse/grid.hpp"
#include "headfuse/tape.hpp"

namespace headfuse {

enum class StrategyKind { kNoFusion, kLateFusion, kHeteroHead, kHomoHead };

// Which fusion the ego applies to a received message.
struct FusionStrategy {
  StrategyKind kind = StrategyKind::kNoFusion;
  // Late fusion only: the sender transmits boxes with score >= threshold.
  double sender_score_threshold = 0.75;

  static FusionStrategy no_fusion() { return {StrategyKind::kNoFusion}; }
  static FusionStrategy late(double threshold = 0.75) {
    return {StrategyKind::kLateFusion, threshold};
  }
  static FusionStrategy hetero_head() { return {StrategyKind::kHeteroHead}; }
  static FusionStrategy homo_head() { return {StrategyKind::kHomoHead}; }

  void validate() const;
  bool uses_head_messages() const noexcept {
    return kind == StrategyKind::kHeteroHead || kind == StrategyKind::kHomoHead;
  }
  friend bool operator==(const FusionStrategy&, const FusionStrategy&) = default;
};

// "none" | "late" | "hetero" | "homo" (case-sensitive); "late@0.6" sets the threshold.
FusionStrategy parse_strategy(std::string_view name);
std::string strategy_name(const FusionStrategy& s);

// Element-wise max where both maps are valid; the single valid source
// elsewhere; zero where neither is. Validity is the union.
GridMap fuse_cls_max(const GridMap& cls_ego, const GridMap& cls_j);

// Element-wise mean with the same validity handling as fuse_cls_max.
GridMap fuse_reg_mean(const GridMap& reg_ego, const GridMap& reg_j);

// Per cell, stacks the valid agents' A-dim score vectors and returns the
// query agent's row of softmax(X X^T / sqrt(d_k)) X. The query is the ego
// when it is valid at the cell, otherwise the first valid agent. d_k is the
// stacked width A unless `key_dim` > 0.
GridMap fuse_cls_attention(std::span<const GridMap> cls_maps, std::size_t ego_index,
                           double key_dim = 0.0);

// Learnable operators of the complementary regression fusion.
struct ComplementaryParams {
  ConvParams conv_delta;  // 1x1, 2*C_reg -> 1
  ConvParams conv_a;      // 3x3, 1 -> 1
  BNParams bn_a;
  ConvParams conv_b;      // 3x3, 1 -> 1
  BNParams bn_b;
  ConvParams conv_out;    // 1x1, 2*C_reg -> C_reg

  // Conv weights uniform in +-1/sqrt(fan_in), biases 0, BN identity.
  static ComplementaryParams initialize(int reg_channels, std::uint64_t seed);

  int reg_channels() const noexcept { return conv_out.out_channels; }
  std::size_t parameter_count() const noexcept;
  void validate() const;

  // Visits every parameter array in declaration order.
  void for_each_array(const std::function<void(std::span<double>)>& fn);
  void for_each_array(const std::function<void(std::span<const double>)>& fn) const;

  friend bool operator==(const ComplementaryParams&, const ComplementaryParams&) = default;
};

enum class WeightNormalization { kMinMax, kClamp };

struct ComplementaryOptions {
  WeightNormalization normalization = WeightNormalization::kMinMax;
  // Diagnostic hook: replaces the learned weight map by a constant on the overlap.
  std::optional<double> forced_weight;
};

struct ComplementaryResult {
  GridMap fused;   // C_reg channels; validity of reg_ego
  GridMap weight;  // M, one channel, 0 outside the overlap
};

struct ComplementaryGraph {
  Var fused;
  Var weight;
  Var raw_weight;  // M before normalization
  std::vector<std::uint8_t> overlap;
};

// Records the complementary fusion on `tape`. Inside the overlap (cells
// valid in both maps) the output is the 1x1 conv over the M-weighted
// concatenation; outside it the ego map is copied through.
ComplementaryGraph record_complementary(Tape& tape, const GridMap& reg_ego, const GridMap& reg_j,
                                        const ComplementaryParams& params,
                                        const ComplementaryOptions& options = {});

ComplementaryResult fuse_reg_complementary(const GridMap& reg_ego, const GridMap& reg_j,
                                           const ComplementaryParams& params,
                                           const ComplementaryOptions& options = {});

// nms(ego boxes + received boxes with score >= sender_threshold).
// Received boxes must already be in the ego frame.
std::vector<Box3D> late_fuse(const std::vector<Box3D>& boxes_ego,
                             const std::vector<Box3D>& boxes_received, double sender_threshold,
                             double nms_iou);

// Sender-side filter used by late fusion.
std::vector<Box3D> filter_by_score(const std::vector<Box3D>& boxes, double threshold);

}  // namespace headfuse

#endif  // HEADFUSE_FUSION_HPP_
