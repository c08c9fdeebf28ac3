#ifndef HEADFUSE_HEADS_HPP_
#define HEADFUSE_HEADS_HPP_

#include <cstddef>
#include <vector>

#include "headfuse/geometry.hpp"
#include "headfuse/grid.hpp"

namespace headfuse {

// Number of regression targets per anchor: dx, dy, dz, dl, dw, dh, dyaw.
inline constexpr int kBoxParams = 7;

struct AnchorTemplate {
  double l = 3.9;
  double w = 1.6;
  double h = 1.56;
  double yaw = 0.0;
  double z = -1.0;

  double diagonal() const noexcept;
  friend bool operator==(const AnchorTemplate&, const AnchorTemplate&) = default;
};

struct AnchorGrid {
  BEVGridSpec grid;
  std::vector<AnchorTemplate> templates;

  int anchors_per_cell() const noexcept { return static_cast<int>(templates.size()); }
  int cls_channels() const noexcept { return anchors_per_cell(); }
  int reg_channels() const noexcept { return kBoxParams * anchors_per_cell(); }
  int head_channels() const noexcept { return cls_channels() + reg_channels(); }

  void validate() const;
  // The anchor box of template `a` centred on cell (row, col), score 1.
  Box3D anchor_box(int row, int col, int a) const noexcept;

  friend bool operator==(const AnchorGrid&, const AnchorGrid&) = default;
};

// One vehicle class, two yaw templates (0 and pi/2): 2 + 14 = 16 head channels.
AnchorGrid default_anchor_grid(const BEVGridSpec& grid = {});

// Classification (A channels, post-sigmoid scores) and regression (7A
// channels, anchor-major) head outputs over one grid.
struct HeadMaps {
  GridMap cls;
  GridMap reg;
  friend bool operator==(const HeadMaps&, const HeadMaps&) = default;
};

struct EncodedTargets {
  HeadMaps maps;
  std::size_t skipped = 0;    // boxes whose centre lies outside the grid
  std::size_t collisions = 0; // boxes that overwrote an already-assigned anchor
};

// Offsets of `box` relative to anchor template `t` centred at `anchor_center`.
std::array<double, kBoxParams> encode_box(const Box3D& box, const AnchorTemplate& t,
                                          Vec2 anchor_center) noexcept;
Box3D decode_box(const std::array<double, kBoxParams>& offsets, const AnchorTemplate& t,
                 Vec2 anchor_center, double score) noexcept;

// Anchor whose yaw is closest to `yaw` modulo pi.
int best_anchor(const AnchorGrid& anchors, double yaw) noexcept;

// Ground truth to targets: the box's centre cell and best-yaw anchor get
// classification 1 and the box offsets; everything else is 0.
EncodedTargets encode_gt(const std::vector<Box3D>& boxes, const AnchorGrid& anchors);

// Boxes for every valid cell/anchor with score >= threshold, then NMS.
std::vector<Box3D> decode(const GridMap& cls, const GridMap& reg, const AnchorGrid& anchors,
                          double score_threshold, double nms_iou);

// Moves head maps rendered in `src_pose`'s frame into `dst_pose`'s frame:
// nearest-neighbour resampling plus re-encoding of the regression content
// against the destination anchors (so the decoded boxes are rigidly moved).
HeadMaps warp_head_maps(const HeadMaps& src, const AnchorGrid& anchors, const Pose2D& src_pose,
                        const Pose2D& dst_pose);

// Source-to-destination anchor permutation under a relative yaw rotation.
std::vector<int> anchor_permutation(const AnchorGrid& anchors, double relative_yaw);

}  // namespace headfuse

#endif  // HEADFUSE_HEADS_HPP_
