#ifndef HEADFUSE_RENDER_HPP_
#define HEADFUSE_RENDER_HPP_

#include <cstddef>
#include <vector>

#include "headfuse/geometry.hpp"
#include "headfuse/heads.hpp"
#include "headfuse/scenario.hpp"

namespace headfuse {

// True when the segment p-q touches the footprint of `box`.
bool segment_hits_box(Vec2 p, Vec2 q, const Box3D& box) noexcept;

// Fraction of the model's rays from `viewpoint` that reach object `index`
// without crossing an occluder or another object's footprint. Rays aim at
// points spread across the object's apparent width (a single ray aims at
// the centre).
double visible_fraction(Vec2 viewpoint, std::size_t index, const Scenario& scenario);

// One fraction per scenario object, seen from `agent`.
std::vector<double> visibility(const Agent& agent, const Scenario& scenario);

// Ground-truth boxes of the objects whose centre lies in the agent's grid,
// expressed in the agent frame.
std::vector<Box3D> local_ground_truth(const Agent& agent, const Scenario& scenario);

// Synthetic head output of `agent` at `frame`. Each visible object scores
// calibrate(visible_fraction * range_factor) at its centre cell and best
// anchor; blur copies the box to neighbouring cells at decaying score.
// Keyed noise then perturbs scores (clamped to [0, 1]) and regression, with
// extra regression noise deep inside footprints, and ghost detections are
// added. All cells are valid.
HeadMaps render_head_maps(const Agent& agent, const Scenario& scenario, const AnchorGrid& anchors,
                          int frame = 0);

}  // namespace headfuse

#endif  // HEADFUSE_RENDER_HPP_
