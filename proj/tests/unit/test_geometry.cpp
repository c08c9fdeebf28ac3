#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "headfuse/errors.hpp"
#include "headfuse/geometry.hpp"
#include "oracles.hpp"

using namespace headfuse;

namespace {

Box3D box(double x, double y, double l, double w, double yaw = 0.0, double score = 1.0) {
  return Box3D{x, y, 0.0, l, w, 1.5, yaw, score};
}

Box3D random_box(Rng& rng, double spread = 3.0) {
  return box(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(1.0, 5.0),
             rng.uniform(0.5, 2.5), rng.uniform(-kPi, kPi), rng.uniform());
}

}  // namespace

TEST(Angles, NormalizeIntoHalfOpenRange) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-12);
  EXPECT_NEAR(normalize_angle(-7.0), -7.0 + 2 * kPi, 1e-12);
  EXPECT_EQ(normalize_angle(0.25), 0.25);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = normalize_angle(rng.uniform(-50.0, 50.0));
    EXPECT_GT(a, -kPi);
    EXPECT_LE(a, kPi);
  }
}

TEST(Pose, LocalWorldRoundTrip) {
  const Pose2D p = Pose2D::make(3.0, -2.0, 0.7);
  const Vec2 w = p.to_world({1.5, 2.5});
  const Vec2 back = p.to_local(w);
  EXPECT_NEAR(back.x, 1.5, 1e-12);
  EXPECT_NEAR(back.y, 2.5, 1e-12);
  const Pose2D q = Pose2D::make(0.0, 0.0, kPi / 2);
  const Vec2 r = q.to_world({1.0, 0.0});
  EXPECT_NEAR(r.x, 0.0, 1e-12);
  EXPECT_NEAR(r.y, 1.0, 1e-12);
  const Vec2 t = transform_point({1.0, 0.0}, q, Pose2D{});
  EXPECT_NEAR(t.y, 1.0, 1e-12);
}

TEST(Pose, TransformBoxKeepsShape) {
  const Box3D b = box(2.0, 1.0, 4.0, 2.0, 0.3, 0.8);
  const Pose2D from = Pose2D::make(1.0, 2.0, 0.5);
  const Pose2D to = Pose2D::make(-3.0, 4.0, -1.2);
  const Box3D moved = transform_box(b, from, to);
  EXPECT_EQ(moved.l, b.l);
  EXPECT_EQ(moved.score, b.score);
  const Box3D back = transform_box(moved, to, from);
  EXPECT_NEAR(back.x, b.x, 1e-12);
  EXPECT_NEAR(back.y, b.y, 1e-12);
  EXPECT_NEAR(back.yaw, b.yaw, 1e-12);
}

TEST(GridSpec, DerivedDimensionsAndValidation) {
  const BEVGridSpec g{-40, 40, -20, 20, 0.5};
  EXPECT_EQ(g.width(), 160);
  EXPECT_EQ(g.height(), 80);
  EXPECT_THROW((BEVGridSpec{-1, 1, -1, 1, 0.3}.validate()), InvalidInput);
  EXPECT_THROW((BEVGridSpec{1, -1, -1, 1, 1}.validate()), InvalidInput);
  EXPECT_THROW((BEVGridSpec{-1, 1, -1, 1, 0}.validate()), InvalidInput);
  const auto cell = g.cell_of({-39.9, 19.9});
  ASSERT_TRUE(cell);
  EXPECT_EQ((*cell)[0], 79);
  EXPECT_EQ((*cell)[1], 0);
  EXPECT_FALSE(g.cell_of({40.0, 0.0}));
  const Vec2 c = g.cell_center(0, 0);
  EXPECT_DOUBLE_EQ(c.x, -39.75);
  EXPECT_DOUBLE_EQ(c.y, -19.75);
}

TEST(RotatedIou, ClosedForms) {
  const Box3D a = box(0, 0, 4, 2, 0.4);
  EXPECT_NEAR(rotated_iou(a, a), 1.0, 1e-9);
  EXPECT_EQ(rotated_iou(box(0, 0, 4, 2), box(100, 0, 4, 2)), 0.0);
  EXPECT_NEAR(rotated_iou(box(0, 0, 2, 2), box(1, 0, 2, 2)), 1.0 / 3.0, 1e-9);
  // A square and its 45-degree turn: the octagon of side 2(sqrt2 - 1).
  const double oct = 8.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(rotated_iou(box(0, 0, 2, 2), box(0, 0, 2, 2, kPi / 4)), oct / (8.0 - oct), 1e-9);
  EXPECT_EQ(rotated_iou(box(0, 0, 2, 2), box(2, 0, 2, 2)), 0.0);
}

TEST(RotatedIou, MatchesMonteCarlo) {
  Rng rng(2);
  for (int i = 0; i < 25; ++i) {
    const Box3D a = random_box(rng);
    const Box3D b = random_box(rng);
    EXPECT_NEAR(rotated_iou(a, b), oracle::monte_carlo_iou(a, b, 200000, 1000 + i), 1e-2);
  }
}

TEST(RotatedIou, SymmetricAndRigidInvariant) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Box3D a = random_box(rng);
    const Box3D b = random_box(rng);
    const double iou = rotated_iou(a, b);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_NEAR(iou, rotated_iou(b, a), 1e-12);
    const Pose2D to = Pose2D::make(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-kPi, kPi));
    EXPECT_NEAR(iou, rotated_iou(transform_box(a, Pose2D{}, to), transform_box(b, Pose2D{}, to)), 1e-9);
  }
}

TEST(Polygon, AreaAndClipping) {
  const std::vector<Vec2> sq{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  const std::vector<Vec2> shifted{{1, 1}, {3, 1}, {3, 3}, {1, 3}};
  EXPECT_DOUBLE_EQ(polygon_area(sq), 4.0);
  EXPECT_NEAR(convex_intersection_area(sq, shifted), 1.0, 1e-12);
}

TEST(Nms, HandTracedCases) {
  EXPECT_EQ(nms({box(0, 0, 4, 2)}, 0.5).size(), 1u);
  const auto two = nms({box(0, 0, 4, 2, 0, 0.8), box(0, 0, 4, 2, 0, 0.9)}, 0.5);
  ASSERT_EQ(two.size(), 1u);
  EXPECT_EQ(two[0].score, 0.9);
  const Box3D a = box(0, 0, 2, 2, 0, 0.9), b = box(1, 0, 2, 2, 0, 0.8), c = box(2.5, 0, 2, 2, 0, 0.7);
  const auto chain = nms({c, b, a}, 0.3);
  ASSERT_EQ(chain.size(), 2u);
  EXPECT_EQ(chain[0], a);
  EXPECT_EQ(chain[1], c);
}

TEST(Nms, TiesBreakByPosition) {
  const auto kept = nms({box(1, 0, 2, 2, 0, 0.5), box(0.5, 0, 2, 2, 0, 0.5)}, 0.3);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].x, 0.5);
}

TEST(Nms, RandomProperties) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Box3D> boxes;
    for (int i = 0; i < 15; ++i) boxes.push_back(random_box(rng, 6.0));
    const double thr = rng.uniform(0.05, 0.9);
    const auto kept = nms(boxes, thr);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      EXPECT_NE(std::find(boxes.begin(), boxes.end(), kept[i]), boxes.end());
      if (i > 0) {
        EXPECT_GE(kept[i - 1].score, kept[i].score);
      }
      for (std::size_t j = 0; j < i; ++j) EXPECT_LT(rotated_iou(kept[i], kept[j]), thr);
    }
  }
}

TEST(Warp, IdenticalPosesAreIdentity) {
  const BEVGridSpec g{-4, 4, -4, 4, 1};
  Rng rng(5);
  const GridMap m = oracle::random_map(rng, 2, 8, 8, -1, 1, 0.2);
  const Pose2D p = Pose2D::make(3, 1, 0.4);
  EXPECT_EQ(warp_map(m, p, p, g), m);
}

TEST(Warp, OneCellShift) {
  const BEVGridSpec g{-4, 4, -4, 4, 1};
  Rng rng(6);
  const GridMap m = oracle::random_map(rng, 1, 8, 8);
  const GridMap w = warp_map(m, Pose2D{}, Pose2D{1, 0, 0}, g);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 7; ++x) {
      EXPECT_TRUE(w.valid(y, x));
      EXPECT_EQ(w.at(0, y, x), m.at(0, y, x + 1));
    }
    EXPECT_FALSE(w.valid(y, 7));
    EXPECT_EQ(w.at(0, y, 7), 0.0);
  }
}

TEST(Warp, RotationMatchesPerCellOracle) {
  const BEVGridSpec g{-4, 4, -4, 4, 1};
  Rng rng(7);
  const GridMap m = oracle::random_map(rng, 2, 8, 8, -1, 1, 0.1);
  for (const Pose2D& dst : {Pose2D::make(0, 0, kPi / 2), Pose2D::make(0.3, -1.2, 0.35)}) {
    const GridMap w = warp_map(m, Pose2D{}, dst, g);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        const Vec2 world = dst.to_world(g.cell_center(r, c));
        const auto src = g.cell_of(world);
        const bool ok = src && m.valid((*src)[0], (*src)[1]);
        ASSERT_EQ(w.valid(r, c), ok);
        for (int ch = 0; ch < 2; ++ch) {
          EXPECT_EQ(w.at(ch, r, c), ok ? m.at(ch, (*src)[0], (*src)[1]) : 0.0);
        }
      }
    }
  }
}

TEST(Warp, RoundTripExactWhereValid) {
  const BEVGridSpec g{-5, 5, -5, 5, 1};
  Rng rng(8);
  const GridMap m = oracle::random_map(rng, 1, 10, 10);
  const Pose2D a{}, b = Pose2D::make(2, -3, kPi / 2);
  const GridMap there = warp_map(m, a, b, g);
  const GridMap back = warp_map(there, b, a, g);
  int valid = 0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      if (!back.valid(y, x)) continue;
      ++valid;
      EXPECT_EQ(back.at(0, y, x), m.at(0, y, x));
    }
  }
  EXPECT_GT(valid, 30);
}

TEST(Warp, RejectsMismatchedGrid) {
  EXPECT_THROW(warp_map(GridMap(1, 3, 3), Pose2D{}, Pose2D{}, BEVGridSpec{-2, 2, -2, 2, 1}), InvalidInput);
}
