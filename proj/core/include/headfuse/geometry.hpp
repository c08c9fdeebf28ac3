#ifndef HEADFUSE_GEOMETRY_HPP_
#define HEADFUSE_GEOMETRY_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "headfuse/grid.hpp"

namespace headfuse {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle into (-pi, pi].
double normalize_angle(double radians) noexcept;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

// Rigid 2D pose of an agent frame in the world. Yaw is kept in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  static Pose2D make(double x, double y, double yaw) { return {x, y, normalize_angle(yaw)}; }

  Vec2 to_world(Vec2 local) const noexcept;
  Vec2 to_local(Vec2 world) const noexcept;

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

// Maps points expressed in `from` to points expressed in `to`.
Vec2 transform_point(Vec2 p, const Pose2D& from, const Pose2D& to) noexcept;

// Axis-aligned BEV lattice in an agent's local frame. Row r covers
// y in [y_min + r*cell, y_min + (r+1)*cell); column c likewise along x.
struct BEVGridSpec {
  double x_min = -40.0;
  double x_max = 40.0;
  double y_min = -40.0;
  double y_max = 40.0;
  double cell = 1.0;

  // Throws InvalidInput unless the extents divide into an exact integer lattice.
  void validate() const;
  int width() const;
  int height() const;

  Vec2 cell_center(int row, int col) const noexcept;
  // Cell containing `p`, or nullopt outside the extent.
  std::optional<std::array<int, 2>> cell_of(Vec2 p) const noexcept;
  bool contains(Vec2 p) const noexcept;

  friend bool operator==(const BEVGridSpec&, const BEVGridSpec&) = default;
};

struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double yaw = 0.0;
  double score = 1.0;

  Vec2 center() const noexcept { return {x, y}; }
  // Footprint corners, counter-clockwise.
  std::array<Vec2, 4> corners() const noexcept;
  double bev_area() const noexcept { return l * w; }
  bool contains_bev(Vec2 p) const noexcept;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

// Re-expresses a box given in frame `from` in frame `to`.
Box3D transform_box(const Box3D& b, const Pose2D& from, const Pose2D& to) noexcept;

// Area of the intersection of two convex counter-clockwise polygons.
double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip);
double polygon_area(std::span<const Vec2> poly) noexcept;

// BEV IoU of the two yaw-oriented footprints; z and height are ignored.
double rotated_iou(const Box3D& a, const Box3D& b);

// Greedy suppression. Candidates are visited by descending score (ties by
// ascending x, then y, then yaw); a box is kept iff its IoU with every kept
// box is below `iou_threshold`.
std::vector<Box3D> nms(std::vector<Box3D> boxes, double iou_threshold);

// Nearest-neighbour source index per destination cell (row-major), or -1.
std::vector<std::int64_t> warp_lookup(const BEVGridSpec& grid, const Pose2D& src_pose,
                                      const Pose2D& dst_pose);

// Resamples `src` (in src_pose's frame) into dst_pose's frame. Cells that
// fall outside the source grid or onto invalid source cells become 0/invalid.
GridMap warp_map(const GridMap& src, const Pose2D& src_pose, const Pose2D& dst_pose,
                 const BEVGridSpec& grid);

}  // namespace headfuse

#endif  // HEADFUSE_GEOMETRY_HPP_
