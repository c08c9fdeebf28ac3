#include "headfuse/render.hpp"

#include <algorithm>
#include <cmath>

#include "headfuse/errors.hpp"
#include "headfuse/random.hpp"

namespace headfuse {

namespace {

constexpr std::uint64_t kScoreNoiseTag = 0x5C0FEULL;
constexpr std::uint64_t kRegNoiseTag = 0x4E6ULL;
constexpr std::uint64_t kGhostTag = 0x6405ULL;

double orient(Vec2 a, Vec2 b, Vec2 c) noexcept {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) noexcept {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) noexcept {
  const double d1 = orient(q1, q2, p1);
  const double d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1);
  const double d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
         (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

Box3D world_to_agent(const Box3D& b, const Agent& agent) {
  return transform_box(b, Pose2D{}, agent.pose);
}

// Depth of `p` inside the footprint relative to the half-width, in [0, 1].
double interior_weight(const Box3D& b, Vec2 p) noexcept {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double dx = p.x - b.x;
  const double dy = p.y - b.y;
  const double u = std::abs(dx * c + dy * s);
  const double v = std::abs(-dx * s + dy * c);
  const double depth = std::min(0.5 * b.l - u, 0.5 * b.w - v);
  return std::clamp(depth / (0.5 * b.w), 0.0, 1.0);
}

}  // namespace

bool segment_hits_box(Vec2 p, Vec2 q, const Box3D& box) noexcept {
  if (box.contains_bev(p) || box.contains_bev(q)) return true;
  const auto c = box.corners();
  for (std::size_t i = 0; i < 4; ++i) {
    if (segments_intersect(p, q, c[i], c[(i + 1) % 4])) return true;
  }
  return false;
}

double visible_fraction(Vec2 viewpoint, std::size_t index, const Scenario& scenario) {
  if (index >= scenario.objects.size()) throw InvalidInput("visible_fraction: object index out of range");
  const Box3D& target = scenario.objects[index];
  const int rays = scenario.visibility.ray_count;
  const double dx = target.x - viewpoint.x;
  const double dy = target.y - viewpoint.y;
  const double dist = std::hypot(dx, dy);
  Vec2 n{0.0, 0.0};
  double half = 0.0;
  if (dist > 0.0 && rays > 1) {
    n = {-dy / dist, dx / dist};
    for (const Vec2& corner : target.corners()) {
      half = std::max(half, std::abs((corner.x - target.x) * n.x + (corner.y - target.y) * n.y));
    }
    half *= 0.8;
  }
  int clear = 0;
  for (int r = 0; r < rays; ++r) {
    const double t = rays > 1 ? -half + 2.0 * half * r / (rays - 1) : 0.0;
    const Vec2 aim{target.x + t * n.x, target.y + t * n.y};
    bool blocked = false;
    for (const Box3D& o : scenario.occluders) {
      if (segment_hits_box(viewpoint, aim, o)) {
        blocked = true;
        break;
      }
    }
    for (std::size_t k = 0; k < scenario.objects.size() && !blocked; ++k) {
      if (k != index && segment_hits_box(viewpoint, aim, scenario.objects[k])) blocked = true;
    }
    if (!blocked) ++clear;
  }
  return static_cast<double>(clear) / rays;
}

std::vector<double> visibility(const Agent& agent, const Scenario& scenario) {
  std::vector<double> out(scenario.objects.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = visible_fraction({agent.pose.x, agent.pose.y}, i, scenario);
  }
  return out;
}

std::vector<Box3D> local_ground_truth(const Agent& agent, const Scenario& scenario) {
  std::vector<Box3D> out;
  for (const Box3D& b : scenario.objects) {
    const Box3D local = world_to_agent(b, agent);
    if (scenario.grid.contains(local.center())) out.push_back(local);
  }
  return out;
}

HeadMaps render_head_maps(const Agent& agent, const Scenario& scenario, const AnchorGrid& anchors,
                          int frame) {
  anchors.validate();
  agent.profile.validate();
  if (!(anchors.grid == scenario.grid)) {
    throw InvalidInput("render_head_maps: anchor grid differs from the scenario grid");
  }
  const BackboneProfile& prof = agent.profile;
  const BEVGridSpec& grid = anchors.grid;
  const int h = grid.height();
  const int w = grid.width();
  const int na = anchors.anchors_per_cell();
  const std::size_t cells = static_cast<std::size_t>(h) * w;

  HeadMaps maps{GridMap(na, h, w), GridMap(anchors.reg_channels(), h, w)};
  std::vector<int> owner(static_cast<std::size_t>(na) * cells, -1);
  std::vector<Box3D> owners;

  const auto stamp = [&](const Box3D& local, int a, int row, int col, double score) {
    if (row < 0 || row >= h || col < 0 || col >= w) return;
    if (!(score > maps.cls.at(a, row, col))) return;
    maps.cls.at(a, row, col) = score;
    const auto enc = encode_box(local, anchors.templates[static_cast<std::size_t>(a)],
                                grid.cell_center(row, col));
    for (int k = 0; k < kBoxParams; ++k) maps.reg.at(a * kBoxParams + k, row, col) = enc[k];
    owner[static_cast<std::size_t>(a) * cells + static_cast<std::size_t>(row) * w + col] =
        static_cast<int>(owners.size()) - 1;
  };

  const auto vis = visibility(agent, scenario);
  for (std::size_t i = 0; i < scenario.objects.size(); ++i) {
    if (!(vis[i] > 0.0)) continue;
    const Box3D& world = scenario.objects[i];
    const Box3D local = world_to_agent(world, agent);
    const auto cell = grid.cell_of(local.center());
    if (!cell) continue;
    const double dist = std::hypot(world.x - agent.pose.x, world.y - agent.pose.y);
    const double score = prof.calibrate(vis[i] * prof.range_factor(dist));
    if (!(score > 0.0)) continue;
    owners.push_back(local);
    const int a = best_anchor(anchors, local.yaw);
    const int r0 = (*cell)[0];
    const int c0 = (*cell)[1];
    for (int dr = -prof.blur_radius; dr <= prof.blur_radius; ++dr) {
      for (int dc = -prof.blur_radius; dc <= prof.blur_radius; ++dc) {
        const int ring = std::max(std::abs(dr), std::abs(dc));
        stamp(local, a, r0 + dr, c0 + dc, score * std::pow(prof.blur_decay, ring));
      }
    }
  }

  const std::uint64_t agent_key = agent.id;
  const std::uint64_t frame_key = static_cast<std::uint64_t>(frame);
  if (prof.ghost_rate > 0.0 && prof.ghost_score_max > 0.0) {
    Rng rng(hash_keys({scenario.seed, agent_key, frame_key, kGhostTag}));
    const int slots = static_cast<int>(std::ceil(2.0 * prof.ghost_rate));
    const double p = prof.ghost_rate / slots;
    for (int g = 0; g < slots; ++g) {
      const bool fire = rng.uniform() < p;
      const int row = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
      const int col = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
      const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(na)));
      const double score = prof.ghost_score_max * rng.uniform(0.4, 1.0);
      const auto& t = anchors.templates[static_cast<std::size_t>(a)];
      const Vec2 c = grid.cell_center(row, col);
      Box3D ghost{c.x + rng.uniform(-0.5, 0.5) * grid.cell, c.y + rng.uniform(-0.5, 0.5) * grid.cell,
                  t.z, t.l * rng.uniform(0.9, 1.15), t.w * rng.uniform(0.9, 1.15), t.h,
                  normalize_angle(t.yaw + 0.1 * rng.normal()), score};
      if (!fire) continue;
      owners.push_back(ghost);
      stamp(ghost, a, row, col, score);
    }
  }

  if (prof.score_sigma > 0.0) {
    for (int a = 0; a < na; ++a) {
      auto plane = maps.cls.plane(a);
      for (std::size_t i = 0; i < cells; ++i) {
        const double n = keyed_normal({scenario.seed, agent_key, frame_key, i,
                                       static_cast<std::uint64_t>(a), kScoreNoiseTag});
        plane[i] = std::clamp(plane[i] + prof.score_sigma * n, 0.0, 1.0);
      }
    }
  }

  if (prof.reg_sigma > 0.0) {
    for (int a = 0; a < na; ++a) {
      const auto& t = anchors.templates[static_cast<std::size_t>(a)];
      const std::array<double, kBoxParams> unit{1.0 / t.diagonal(), 1.0 / t.diagonal(), 1.0 / t.h,
                                                1.0 / t.l,          1.0 / t.w,          1.0 / t.h,
                                                2.0 / t.l};
      for (std::size_t i = 0; i < cells; ++i) {
        double sigma = prof.reg_sigma;
        const int o = owner[static_cast<std::size_t>(a) * cells + i];
        if (o >= 0) {
          const int row = static_cast<int>(i / static_cast<std::size_t>(w));
          const int col = static_cast<int>(i % static_cast<std::size_t>(w));
          sigma *= 1.0 + prof.interior_noise_gain *
                             interior_weight(owners[static_cast<std::size_t>(o)],
                                             grid.cell_center(row, col));
        }
        for (int k = 0; k < kBoxParams; ++k) {
          const double n = keyed_normal({scenario.seed, agent_key, frame_key, i,
                                         static_cast<std::uint64_t>(a * kBoxParams + k), kRegNoiseTag});
          maps.reg.plane(a * kBoxParams + k)[i] += sigma * unit[static_cast<std::size_t>(k)] * n;
        }
      }
    }
  }
  return maps;
}

}  // namespace headfuse
