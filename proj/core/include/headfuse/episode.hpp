#ifndef HEADFUSE_EPISODE_HPP_
#define HEADFUSE_EPISODE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headfuse/fusion.hpp"
#include "headfuse/heads.hpp"
#include "headfuse/scenario.hpp"
#include "headfuse/training.hpp"
#include "headfuse/wire.hpp"

namespace headfuse {

struct EpisodeThresholds {
  double decode_threshold = 0.25;
  double nms_iou = 0.15;
  void validate() const;
};

struct EpisodeOptions {
  std::string codec = "none";
  QuantMode quantization = QuantMode::kFloat32;
  double attention_key_dim = 0.0;
  ComplementaryOptions complementary;
};

struct FrameResult {
  int frame = 0;
  std::optional<std::uint32_t> sender;  // empty: no sender in range, ego-only
  std::vector<Box3D> detections;        // ego frame
  std::vector<Box3D> ground_truth;      // ego frame
  std::size_t message_bytes = 0;
  std::size_t compressed_bytes = 0;
  // The sender's own decoded boxes and ground truth, in its frame.
  std::vector<Box3D> sender_detections;
  std::vector<Box3D> sender_ground_truth;
};

struct EpisodeResult {
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<FrameResult> frames;
  nlohmann::json to_json() const;
  static EpisodeResult from_json(const nlohmann::json& j);
};

// First agent after the ego, in id order, within communication range.
std::optional<std::uint32_t> select_sender(const Scenario& scenario);

// Renders, exchanges and fuses every frame. A head message goes through
// serialize -> codec -> deserialize before the ego uses it; a box message
// likewise. HomoHead requires `params` (ConfigError otherwise).
EpisodeResult run_episode(const Scenario& scenario, const FusionStrategy& strategy,
                          const ComplementaryParams* params, const EpisodeThresholds& thresholds,
                          const EpisodeOptions& options = {});

// Complementary-fusion training triples: ego regression, the sender's
// regression warped into the ego frame, and encode_gt of the objects visible
// to either agent. Every cell within `positive_radius` (Chebyshev) of an
// object's centre cell is a positive at the object's anchor, with the box
// encoded against that cell. Frames without a sender contribute nothing.
std::vector<TrainingSample> make_training_samples(const Scenario& scenario,
                                                  const EpisodeOptions& options = {},
                                                  int positive_radius = 1);

// `count` scenarios with seeds seed, seed + 1, ...
std::vector<Scenario> make_suite(std::uint64_t seed, int count, const ScenarioConfig& config);

}  // namespace headfuse

#endif  // HEADFUSE_EPISODE_HPP_
