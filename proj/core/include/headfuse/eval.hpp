#ifndef HEADFUSE_EVAL_HPP_
#define HEADFUSE_EVAL_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "headfuse/episode.hpp"
#include "headfuse/geometry.hpp"

namespace headfuse {

enum class ApVariant { kAllPoint, kInterpolated11 };

struct EvalConfig {
  std::vector<double> iou_thresholds{0.5, 0.7};
  std::vector<double> sweep_thresholds;  // empty: 0, 0.05, ..., 1
  ApVariant variant = ApVariant::kAllPoint;
  void validate() const;
  std::vector<double> sweep_grid() const;
};

struct FrameDetections {
  std::vector<Box3D> detections;
  std::vector<Box3D> ground_truth;
};

struct ApResult {
  double ap = 0.0;
  std::size_t gt_count = 0;
  std::size_t det_count = 0;
  std::size_t tp_count = 0;
  std::vector<std::pair<double, double>> curve;  // (recall, precision) per ranked detection
  bool no_ground_truth = false;
};

// Detections of all frames are ranked together by descending score (ties by
// frame, then x, y, yaw). Each detection claims the unmatched ground truth
// of its frame with the highest IoU if that IoU >= iou_threshold.
ApResult evaluate_ap(std::span<const FrameDetections> frames, double iou_threshold,
                     ApVariant variant = ApVariant::kAllPoint);
// Zero ground-truth boxes give 0 and log a warning.
double average_precision(std::span<const FrameDetections> frames, double iou_threshold,
                         ApVariant variant = ApVariant::kAllPoint);

struct LabeledDetection {
  double score = 0.0;
  bool true_positive = false;
};

// Same matching rule as evaluate_ap.
std::vector<LabeledDetection> label_detections(std::span<const FrameDetections> frames,
                                               double iou_threshold = 0.5);

struct FpPoint {
  double threshold = 0.0;
  std::size_t fp_count = 0;  // FPs with score >= threshold
  std::size_t tp_count = 0;
};

struct FpSweep {
  std::vector<FpPoint> curve;
  // Smallest threshold transmitting no FP: just above the highest FP score,
  // or 0 without FPs.
  double zero_fp_threshold = 0.0;
  // Smallest grid threshold with no FP, if any.
  std::optional<double> grid_zero_fp_threshold;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

FpSweep fp_threshold_sweep(std::span<const LabeledDetection> detections,
                           std::span<const double> thresholds);

// Sender-side detections of every frame of every episode, for the sweep.
std::vector<FrameDetections> sender_frames(std::span<const EpisodeResult> episodes);
std::vector<FrameDetections> ego_frames(std::span<const EpisodeResult> episodes);

struct ComparisonRow {
  std::string strategy;
  std::optional<double> ap50;
  std::optional<double> ap70;
  double bytes_per_frame = 0.0;
  double mbps = 0.0;
  std::size_t gt_count = 0;
};

struct ComparisonTable {
  double fps = 10.0;
  std::vector<ComparisonRow> rows;
  const ComparisonRow* find(const std::string& strategy) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct CompareOptions {
  EpisodeThresholds thresholds;
  EpisodeOptions episode;
  EvalConfig eval;
  double fps = 10.0;
  int jobs = 1;
  bool intermediate_row = false;
  int intermediate_channels = 256;
};

// Runs every strategy on every scenario (scenarios in parallel, up to
// options.jobs workers, merged in order). Bandwidth averages the raw message
// bytes over frames that had a sender. With intermediate_row, a last row
// holds the hypothetical intermediate-fusion payload over the scenario grid.
ComparisonTable compare_strategies(std::span<const Scenario> scenarios,
                                   std::span<const FusionStrategy> strategies,
                                   const ComplementaryParams* params,
                                   const CompareOptions& options = {});

// Rows from already-computed episodes of one strategy.
ComparisonRow summarize(const std::string& strategy, std::span<const EpisodeResult> episodes,
                        const EvalConfig& eval, double fps);

}  // namespace headfuse

#endif  // HEADFUSE_EVAL_HPP_
