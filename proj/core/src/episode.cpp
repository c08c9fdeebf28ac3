#include "headfuse/episode.hpp"

#include <cmath>
#include <limits>

#include "headfuse/codec.hpp"
#include "headfuse/errors.hpp"
#include "headfuse/json_io.hpp"
#include "headfuse/render.hpp"

namespace headfuse {

namespace {

struct Exchange {
  HeadMaps warped;
  std::size_t bytes = 0;
  std::size_t compressed = 0;
};

Exchange exchange_head(const Agent& sender, const Agent& ego, const HeadMaps& sender_maps,
                       const AnchorGrid& anchors, int frame, const Codec& codec,
                       const EpisodeOptions& options) {
  const HeadMessage msg = make_head_message(sender.id, static_cast<std::uint64_t>(frame), sender.pose,
                                            anchors, sender_maps, options.quantization);
  const Bytes raw = serialize(msg);
  const Bytes packed = codec.compress(raw);
  const HeadMessage received = deserialize_head(codec.decompress(packed));
  return {warp_head_maps(received.maps(), anchors, received.pose, ego.pose), raw.size(), packed.size()};
}

// encode_gt extended to the neighbourhood of each centre cell. A cell keeps
// the object whose centre is nearest to it.
HeadMaps spread_targets(const std::vector<Box3D>& boxes, const AnchorGrid& anchors, int radius) {
  const BEVGridSpec& grid = anchors.grid;
  const int h = grid.height();
  const int w = grid.width();
  HeadMaps out{GridMap(anchors.cls_channels(), h, w), GridMap(anchors.reg_channels(), h, w)};
  std::vector<double> claim(static_cast<std::size_t>(anchors.cls_channels()) * h * w,
                            std::numeric_limits<double>::infinity());
  for (const Box3D& b : boxes) {
    const auto cell = grid.cell_of(b.center());
    if (!cell) continue;
    const int a = best_anchor(anchors, b.yaw);
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        const int row = (*cell)[0] + dr;
        const int col = (*cell)[1] + dc;
        if (row < 0 || row >= h || col < 0 || col >= w) continue;
        const Vec2 c = grid.cell_center(row, col);
        const double d = std::hypot(b.x - c.x, b.y - c.y);
        double& best = claim[(static_cast<std::size_t>(a) * h + row) * w + col];
        if (!(d < best)) continue;
        best = d;
        out.cls.at(a, row, col) = 1.0;
        const auto enc = encode_box(b, anchors.templates[static_cast<std::size_t>(a)], c);
        for (int k = 0; k < kBoxParams; ++k) out.reg.at(a * kBoxParams + k, row, col) = enc[k];
      }
    }
  }
  return out;
}

}  // namespace

void EpisodeThresholds::validate() const {
  if (!(decode_threshold >= 0.0 && decode_threshold <= 1.0)) {
    throw InvalidInput("decode_threshold must be in [0, 1]");
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw InvalidInput("nms_iou must be in (0, 1]");
}

std::optional<std::uint32_t> select_sender(const Scenario& scenario) {
  const Agent& ego = scenario.agents.front();
  std::optional<std::uint32_t> best;
  for (std::size_t i = 1; i < scenario.agents.size(); ++i) {
    const Agent& a = scenario.agents[i];
    const double d = std::hypot(a.pose.x - ego.pose.x, a.pose.y - ego.pose.y);
    if (d > scenario.comm_range) continue;
    if (!best || a.id < *best) best = a.id;
  }
  return best;
}

EpisodeResult run_episode(const Scenario& scenario, const FusionStrategy& strategy,
                          const ComplementaryParams* params, const EpisodeThresholds& thresholds,
                          const EpisodeOptions& options) {
  scenario.validate();
  strategy.validate();
  thresholds.validate();
  if (strategy.kind == StrategyKind::kHomoHead) {
    if (params == nullptr) throw ConfigError("HomoHead needs trained complementary parameters");
    params->validate();
  }
  const AnchorGrid anchors = default_anchor_grid(scenario.grid);
  if (params != nullptr && strategy.kind == StrategyKind::kHomoHead &&
      params->reg_channels() != anchors.reg_channels()) {
    throw ConfigError("checkpoint regression channels do not match the anchor grid");
  }
  const auto codec = make_codec(options.codec);
  const Agent& ego = scenario.agents.front();
  const auto sender_id = select_sender(scenario);

  EpisodeResult result;
  result.strategy = strategy_name(strategy);
  result.seed = scenario.seed;
  for (int f = 0; f < scenario.frames; ++f) {
    FrameResult fr;
    fr.frame = f;
    fr.ground_truth = local_ground_truth(ego, scenario);
    const HeadMaps ego_maps = render_head_maps(ego, scenario, anchors, f);
    const double thr = thresholds.decode_threshold;
    const double nms_iou = thresholds.nms_iou;

    if (!sender_id) {
      fr.detections = decode(ego_maps.cls, ego_maps.reg, anchors, thr, nms_iou);
      result.frames.push_back(std::move(fr));
      continue;
    }
    fr.sender = sender_id;
    const Agent& sender = scenario.agent(*sender_id);
    const HeadMaps sender_maps = render_head_maps(sender, scenario, anchors, f);
    fr.sender_detections = decode(sender_maps.cls, sender_maps.reg, anchors, thr, nms_iou);
    fr.sender_ground_truth = local_ground_truth(sender, scenario);

    switch (strategy.kind) {
      case StrategyKind::kNoFusion:
        fr.detections = decode(ego_maps.cls, ego_maps.reg, anchors, thr, nms_iou);
        break;
      case StrategyKind::kLateFusion: {
        const BoxMessage msg = make_box_message(sender.id, static_cast<std::uint64_t>(f), sender.pose,
                                                fr.sender_detections, strategy.sender_score_threshold);
        const Bytes raw = serialize(msg);
        const Bytes packed = codec->compress(raw);
        const BoxMessage received = deserialize_box(codec->decompress(packed));
        fr.message_bytes = raw.size();
        fr.compressed_bytes = packed.size();
        std::vector<Box3D> moved;
        moved.reserve(received.boxes.size());
        for (const Box3D& b : received.boxes) moved.push_back(transform_box(b, received.pose, ego.pose));
        const auto ego_boxes = decode(ego_maps.cls, ego_maps.reg, anchors, thr, nms_iou);
        fr.detections = late_fuse(ego_boxes, moved, strategy.sender_score_threshold, nms_iou);
        break;
      }
      case StrategyKind::kHeteroHead:
      case StrategyKind::kHomoHead: {
        const Exchange ex = exchange_head(sender, ego, sender_maps, anchors, f, *codec, options);
        fr.message_bytes = ex.bytes;
        fr.compressed_bytes = ex.compressed;
        GridMap cls;
        GridMap reg;
        if (strategy.kind == StrategyKind::kHeteroHead) {
          cls = fuse_cls_max(ego_maps.cls, ex.warped.cls);
          reg = fuse_reg_mean(ego_maps.reg, ex.warped.reg);
        } else {
          const std::vector<GridMap> stack{ego_maps.cls, ex.warped.cls};
          cls = fuse_cls_attention(stack, 0, options.attention_key_dim);
          reg = fuse_reg_complementary(ego_maps.reg, ex.warped.reg, *params, options.complementary).fused;
        }
        fr.detections = decode(cls, reg, anchors, thr, nms_iou);
        break;
      }
    }
    result.frames.push_back(std::move(fr));
  }
  return result;
}

std::vector<TrainingSample> make_training_samples(const Scenario& scenario,
                                                  const EpisodeOptions& options,
                                                  int positive_radius) {
  scenario.validate();
  if (positive_radius < 0) throw InvalidInput("make_training_samples: negative positive radius");
  const auto sender_id = select_sender(scenario);
  if (!sender_id) return {};
  const AnchorGrid anchors = default_anchor_grid(scenario.grid);
  const auto codec = make_codec(options.codec);
  const Agent& ego = scenario.agents.front();
  const Agent& sender = scenario.agent(*sender_id);

  const auto vis_ego = visibility(ego, scenario);
  const auto vis_sender = visibility(sender, scenario);
  std::vector<Box3D> seen;
  for (std::size_t i = 0; i < scenario.objects.size(); ++i) {
    if (!(vis_ego[i] > 0.0 || vis_sender[i] > 0.0)) continue;
    const Box3D local = transform_box(scenario.objects[i], Pose2D{}, ego.pose);
    if (scenario.grid.contains(local.center())) seen.push_back(local);
  }
  const HeadMaps gt = spread_targets(seen, anchors, positive_radius);
  const auto positive = positive_mask_from_cls(gt.cls);

  std::vector<TrainingSample> out;
  for (int f = 0; f < scenario.frames; ++f) {
    const HeadMaps ego_maps = render_head_maps(ego, scenario, anchors, f);
    const HeadMaps sender_maps = render_head_maps(sender, scenario, anchors, f);
    Exchange ex = exchange_head(sender, ego, sender_maps, anchors, f, *codec, options);
    out.push_back({ego_maps.reg, std::move(ex.warped.reg), gt.reg, positive});
  }
  return out;
}

std::vector<Scenario> make_suite(std::uint64_t seed, int count, const ScenarioConfig& config) {
  if (count < 0) throw InvalidInput("make_suite: negative scenario count");
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_scenario(seed + static_cast<std::uint64_t>(i), config));
  return out;
}

nlohmann::json EpisodeResult::to_json() const {
  nlohmann::json frames_json = nlohmann::json::array();
  for (const auto& f : frames) {
    frames_json.push_back({{"frame", f.frame},
                           {"sender", f.sender ? nlohmann::json(*f.sender) : nlohmann::json(nullptr)},
                           {"detections", headfuse::to_json(f.detections)},
                           {"ground_truth", headfuse::to_json(f.ground_truth)},
                           {"message_bytes", f.message_bytes},
                           {"compressed_bytes", f.compressed_bytes},
                           {"sender_detections", headfuse::to_json(f.sender_detections)},
                           {"sender_ground_truth", headfuse::to_json(f.sender_ground_truth)}});
  }
  return {{"strategy", strategy}, {"seed", seed}, {"frames", frames_json}};
}

EpisodeResult EpisodeResult::from_json(const nlohmann::json& j) {
  try {
    EpisodeResult r;
    r.strategy = j.at("strategy").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    for (const auto& f : j.at("frames")) {
      FrameResult fr;
      fr.frame = f.at("frame").get<int>();
      if (f.contains("sender") && !f.at("sender").is_null()) fr.sender = f.at("sender").get<std::uint32_t>();
      fr.detections = boxes_from_json(f.at("detections"));
      fr.ground_truth = boxes_from_json(f.at("ground_truth"));
      fr.message_bytes = f.value("message_bytes", std::size_t{0});
      fr.compressed_bytes = f.value("compressed_bytes", std::size_t{0});
      if (f.contains("sender_detections")) fr.sender_detections = boxes_from_json(f.at("sender_detections"));
      if (f.contains("sender_ground_truth")) {
        fr.sender_ground_truth = boxes_from_json(f.at("sender_ground_truth"));
      }
      r.frames.push_back(std::move(fr));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed episode result: ") + e.what());
  }
}

}  // namespace headfuse
