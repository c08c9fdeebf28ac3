#include "headfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

constexpr double kEdgeEps = 1e-9;

double cross(Vec2 o, Vec2 a, Vec2 b) noexcept {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int exact_cells(double lo, double hi, double cell, const char* axis) {
  const double n = (hi - lo) / cell;
  const double r = std::round(n);
  if (!(hi > lo) || r < 1.0 || std::abs(n - r) > 1e-9 * std::max(1.0, r)) {
    throw InvalidInput(std::string("BEVGridSpec: ") + axis +
                       " extent is not a positive integer number of cells");
  }
  return static_cast<int>(r);
}

}  // namespace

double normalize_angle(double radians) noexcept {
  double a = std::fmod(radians, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Vec2 Pose2D::to_world(Vec2 local) const noexcept {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {x + c * local.x - s * local.y, y + s * local.x + c * local.y};
}

Vec2 Pose2D::to_local(Vec2 world) const noexcept {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double dx = world.x - x;
  const double dy = world.y - y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 transform_point(Vec2 p, const Pose2D& from, const Pose2D& to) noexcept {
  return to.to_local(from.to_world(p));
}

void BEVGridSpec::validate() const {
  if (!(cell > 0.0)) throw InvalidInput("BEVGridSpec: cell size must be positive");
  exact_cells(x_min, x_max, cell, "x");
  exact_cells(y_min, y_max, cell, "y");
}

int BEVGridSpec::width() const { return exact_cells(x_min, x_max, cell, "x"); }
int BEVGridSpec::height() const { return exact_cells(y_min, y_max, cell, "y"); }

Vec2 BEVGridSpec::cell_center(int row, int col) const noexcept {
  return {x_min + (col + 0.5) * cell, y_min + (row + 0.5) * cell};
}

std::optional<std::array<int, 2>> BEVGridSpec::cell_of(Vec2 p) const noexcept {
  if (!contains(p)) return std::nullopt;
  const int col = static_cast<int>(std::floor((p.x - x_min) / cell));
  const int row = static_cast<int>(std::floor((p.y - y_min) / cell));
  const int w = static_cast<int>(std::lround((x_max - x_min) / cell));
  const int h = static_cast<int>(std::lround((y_max - y_min) / cell));
  if (row < 0 || col < 0 || row >= h || col >= w) return std::nullopt;
  return std::array<int, 2>{row, col};
}

bool BEVGridSpec::contains(Vec2 p) const noexcept {
  return p.x >= x_min && p.x < x_max && p.y >= y_min && p.y < y_max;
}

std::array<Vec2, 4> Box3D::corners() const noexcept {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hl = 0.5 * l;
  const double hw = 0.5 * w;
  const std::array<Vec2, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {x + c * local[i].x - s * local[i].y, y + s * local[i].x + c * local[i].y};
  }
  return out;
}

bool Box3D::contains_bev(Vec2 p) const noexcept {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double dx = p.x - x;
  const double dy = p.y - y;
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * l && std::abs(v) <= 0.5 * w;
}

Box3D transform_box(const Box3D& b, const Pose2D& from, const Pose2D& to) noexcept {
  Box3D out = b;
  const Vec2 c = transform_point(b.center(), from, to);
  out.x = c.x;
  out.y = c.y;
  out.yaw = normalize_angle(b.yaw + from.yaw - to.yaw);
  return out;
}

double polygon_area(std::span<const Vec2> poly) noexcept {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(twice);
}

double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    std::vector<Vec2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2 cur = input[i];
      const Vec2 prev = input[(i + input.size() - 1) % input.size()];
      const double dc = cross(a, b, cur);
      const double dp = cross(a, b, prev);
      const bool cur_in = dc >= -kEdgeEps;
      const bool prev_in = dp >= -kEdgeEps;
      if (cur_in != prev_in) {
        const double t = std::clamp(dp / (dp - dc), 0.0, 1.0);
        output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
      if (cur_in) output.push_back(cur);
    }
  }
  return polygon_area(output);
}

double rotated_iou(const Box3D& a, const Box3D& b) {
  const double area_a = a.bev_area();
  const double area_b = b.bev_area();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  if (std::hypot(a.x - b.x, a.y - b.y) > ra + rb) return 0.0;

  const auto ca = a.corners();
  const auto cb = b.corners();
  const double inter = convex_intersection_area(ca, cb);
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Box3D> nms(std::vector<Box3D> boxes, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw InvalidInput("nms: iou_threshold must be in [0, 1]");
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box3D& p, const Box3D& q) {
    if (p.score != q.score) return p.score > q.score;
    return std::tie(p.x, p.y, p.yaw) < std::tie(q.x, q.y, q.yaw);
  });
  std::vector<Box3D> kept;
  for (const Box3D& b : boxes) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Box3D& k) {
      return rotated_iou(b, k) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

std::vector<std::int64_t> warp_lookup(const BEVGridSpec& grid, const Pose2D& src_pose,
                                      const Pose2D& dst_pose) {
  const int h = grid.height();
  const int w = grid.width();
  std::vector<std::int64_t> lookup(static_cast<std::size_t>(h) * w, -1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Vec2 p = transform_point(grid.cell_center(r, c), dst_pose, src_pose);
      if (auto cell = grid.cell_of(p)) {
        lookup[static_cast<std::size_t>(r) * w + c] =
            static_cast<std::int64_t>((*cell)[0]) * w + (*cell)[1];
      }
    }
  }
  return lookup;
}

GridMap warp_map(const GridMap& src, const Pose2D& src_pose, const Pose2D& dst_pose,
                 const BEVGridSpec& grid) {
  if (src.height() != grid.height() || src.width() != grid.width()) {
    throw InvalidInput("warp_map: source map extent does not match grid spec");
  }
  const auto lookup = warp_lookup(grid, src_pose, dst_pose);
  GridMap out(src.channels(), src.height(), src.width());
  auto validity = out.validity();
  const auto src_valid = src.validity();
  for (std::size_t i = 0; i < lookup.size(); ++i) {
    const std::int64_t s = lookup[i];
    const bool ok = s >= 0 && src_valid[static_cast<std::size_t>(s)];
    validity[i] = ok ? 1 : 0;
    if (!ok) continue;
    for (int ch = 0; ch < src.channels(); ++ch) {
      out.plane(ch)[i] = src.plane(ch)[static_cast<std::size_t>(s)];
    }
  }
  return out;
}

}  // namespace headfuse
