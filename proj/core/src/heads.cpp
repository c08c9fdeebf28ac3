#include "headfuse/heads.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

// Orientation distance ignoring heading direction (boxes are symmetric under pi).
double axis_distance(double a, double b) noexcept {
  return std::abs(normalize_angle(2.0 * (a - b))) * 0.5;
}

void require_head_shapes(const GridMap& cls, const GridMap& reg, const AnchorGrid& anchors) {
  const int a = anchors.anchors_per_cell();
  const int h = anchors.grid.height();
  const int w = anchors.grid.width();
  if (cls.channels() != a || reg.channels() != kBoxParams * a) {
    throw InvalidInput("head maps have " + std::to_string(cls.channels()) + "/" +
                       std::to_string(reg.channels()) + " channels, anchors expect " +
                       std::to_string(a) + "/" + std::to_string(kBoxParams * a));
  }
  if (cls.height() != h || cls.width() != w || !cls.same_extent(reg)) {
    throw InvalidInput("head maps do not match the anchor grid extent");
  }
}

}  // namespace

double AnchorTemplate::diagonal() const noexcept { return std::hypot(l, w); }

void AnchorGrid::validate() const {
  grid.validate();
  if (templates.empty()) throw InvalidInput("AnchorGrid: at least one anchor template required");
  for (const auto& t : templates) {
    if (!(t.l > 0.0 && t.w > 0.0 && t.h > 0.0)) {
      throw InvalidInput("AnchorGrid: template dimensions must be positive");
    }
  }
}

Box3D AnchorGrid::anchor_box(int row, int col, int a) const noexcept {
  const AnchorTemplate& t = templates[static_cast<std::size_t>(a)];
  const Vec2 c = grid.cell_center(row, col);
  return Box3D{c.x, c.y, t.z, t.l, t.w, t.h, t.yaw, 1.0};
}

AnchorGrid default_anchor_grid(const BEVGridSpec& grid) {
  AnchorGrid g{grid, {AnchorTemplate{}, AnchorTemplate{}}};
  g.templates[1].yaw = kPi / 2.0;
  g.validate();
  return g;
}

std::array<double, kBoxParams> encode_box(const Box3D& box, const AnchorTemplate& t,
                                          Vec2 anchor_center) noexcept {
  const double d = t.diagonal();
  return {(box.x - anchor_center.x) / d,
          (box.y - anchor_center.y) / d,
          (box.z - t.z) / t.h,
          std::log(box.l / t.l),
          std::log(box.w / t.w),
          std::log(box.h / t.h),
          normalize_angle(box.yaw - t.yaw)};
}

Box3D decode_box(const std::array<double, kBoxParams>& o, const AnchorTemplate& t,
                 Vec2 anchor_center, double score) noexcept {
  const double d = t.diagonal();
  return Box3D{anchor_center.x + o[0] * d,
               anchor_center.y + o[1] * d,
               t.z + o[2] * t.h,
               t.l * std::exp(o[3]),
               t.w * std::exp(o[4]),
               t.h * std::exp(o[5]),
               normalize_angle(t.yaw + o[6]),
               score};
}

int best_anchor(const AnchorGrid& anchors, double yaw) noexcept {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < anchors.anchors_per_cell(); ++a) {
    const double dist = axis_distance(yaw, anchors.templates[static_cast<std::size_t>(a)].yaw);
    if (dist < best_dist - 1e-12) {
      best = a;
      best_dist = dist;
    }
  }
  return best;
}

EncodedTargets encode_gt(const std::vector<Box3D>& boxes, const AnchorGrid& anchors) {
  anchors.validate();
  const int h = anchors.grid.height();
  const int w = anchors.grid.width();
  EncodedTargets out{HeadMaps{GridMap(anchors.cls_channels(), h, w),
                              GridMap(anchors.reg_channels(), h, w)},
                     0, 0};
  for (const Box3D& b : boxes) {
    const auto cell = anchors.grid.cell_of(b.center());
    if (!cell) {
      ++out.skipped;
      continue;
    }
    const int row = (*cell)[0];
    const int col = (*cell)[1];
    const int a = best_anchor(anchors, b.yaw);
    if (out.maps.cls.at(a, row, col) != 0.0) ++out.collisions;
    out.maps.cls.at(a, row, col) = 1.0;
    const auto offsets = encode_box(b, anchors.templates[static_cast<std::size_t>(a)],
                                    anchors.grid.cell_center(row, col));
    for (int k = 0; k < kBoxParams; ++k) out.maps.reg.at(a * kBoxParams + k, row, col) = offsets[k];
  }
  return out;
}

std::vector<Box3D> decode(const GridMap& cls, const GridMap& reg, const AnchorGrid& anchors,
                          double score_threshold, double nms_iou) {
  require_head_shapes(cls, reg, anchors);
  std::vector<Box3D> candidates;
  for (int a = 0; a < anchors.anchors_per_cell(); ++a) {
    const AnchorTemplate& t = anchors.templates[static_cast<std::size_t>(a)];
    for (int row = 0; row < cls.height(); ++row) {
      for (int col = 0; col < cls.width(); ++col) {
        if (!cls.valid(row, col)) continue;
        const double score = cls.at(a, row, col);
        if (!(score >= score_threshold)) continue;
        std::array<double, kBoxParams> o{};
        for (int k = 0; k < kBoxParams; ++k) o[k] = reg.at(a * kBoxParams + k, row, col);
        candidates.push_back(decode_box(o, t, anchors.grid.cell_center(row, col), score));
      }
    }
  }
  return nms(std::move(candidates), nms_iou);
}

std::vector<int> anchor_permutation(const AnchorGrid& anchors, double relative_yaw) {
  const int n = anchors.anchors_per_cell();
  int best_shift = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    double cost = 0.0;
    for (int a = 0; a < n; ++a) {
      cost += axis_distance(anchors.templates[static_cast<std::size_t>(a)].yaw + relative_yaw,
                            anchors.templates[static_cast<std::size_t>((a + k) % n)].yaw);
    }
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      best_shift = k;
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) perm[static_cast<std::size_t>(a)] = (a + best_shift) % n;
  return perm;
}

HeadMaps warp_head_maps(const HeadMaps& src, const AnchorGrid& anchors, const Pose2D& src_pose,
                        const Pose2D& dst_pose) {
  require_head_shapes(src.cls, src.reg, anchors);
  const BEVGridSpec& grid = anchors.grid;
  const int h = grid.height();
  const int w = grid.width();
  const int n = anchors.anchors_per_cell();
  const auto lookup = warp_lookup(grid, src_pose, dst_pose);
  const auto perm = anchor_permutation(anchors, src_pose.yaw - dst_pose.yaw);

  HeadMaps out{GridMap(anchors.cls_channels(), h, w), GridMap(anchors.reg_channels(), h, w)};
  const auto src_valid = src.cls.validity();
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * w + col;
      const std::int64_t s = lookup[i];
      const bool ok = s >= 0 && src_valid[static_cast<std::size_t>(s)] &&
                      src.reg.validity()[static_cast<std::size_t>(s)];
      out.cls.validity()[i] = ok ? 1 : 0;
      out.reg.validity()[i] = ok ? 1 : 0;
      if (!ok) continue;
      const int srow = static_cast<int>(s / w);
      const int scol = static_cast<int>(s % w);
      const Vec2 src_center = grid.cell_center(srow, scol);
      const Vec2 dst_center = grid.cell_center(row, col);
      for (int a = 0; a < n; ++a) {
        const int ad = perm[static_cast<std::size_t>(a)];
        out.cls.at(ad, row, col) = src.cls.at(a, srow, scol);
        std::array<double, kBoxParams> o{};
        for (int k = 0; k < kBoxParams; ++k) o[k] = src.reg.at(a * kBoxParams + k, srow, scol);
        const Box3D local =
            decode_box(o, anchors.templates[static_cast<std::size_t>(a)], src_center, 1.0);
        const Box3D moved = transform_box(local, src_pose, dst_pose);
        const auto enc = encode_box(moved, anchors.templates[static_cast<std::size_t>(ad)], dst_center);
        for (int k = 0; k < kBoxParams; ++k) out.reg.at(ad * kBoxParams + k, row, col) = enc[k];
      }
    }
  }
  return out;
}

}  // namespace headfuse
