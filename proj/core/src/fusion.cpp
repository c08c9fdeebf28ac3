#include "headfuse/fusion.hpp"

#include <algorithm>
#include <iterator>
#include <cmath>
#include <sstream>

#include "headfuse/errors.hpp"
#include "headfuse/random.hpp"

namespace headfuse {

void FusionStrategy::validate() const {
  if (!(sender_score_threshold >= 0.0 && sender_score_threshold <= 1.0)) {
    throw InvalidInput("FusionStrategy: sender_score_threshold must be in [0, 1]");
  }
}

FusionStrategy parse_strategy(std::string_view name) {
  if (name == "none") return FusionStrategy::no_fusion();
  if (name == "hetero") return FusionStrategy::hetero_head();
  if (name == "homo") return FusionStrategy::homo_head();
  if (name == "late") return FusionStrategy::late();
  if (name.starts_with("late@")) {
    const std::string text(name.substr(5));
    std::size_t used = 0;
    double threshold = 0.0;
    try {
      threshold = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || text.empty()) {
      throw ConfigError("bad late-fusion threshold in strategy '" + std::string(name) + "'");
    }
    FusionStrategy s = FusionStrategy::late(threshold);
    try {
      s.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected none, late, late@<t>, hetero or homo)");
}

std::string strategy_name(const FusionStrategy& s) {
  switch (s.kind) {
    case StrategyKind::kNoFusion:
      return "none";
    case StrategyKind::kHeteroHead:
      return "hetero";
    case StrategyKind::kHomoHead:
      return "homo";
    case StrategyKind::kLateFusion: {
      if (s.sender_score_threshold == 0.75) return "late";
      std::ostringstream os;
      os << "late@" << s.sender_score_threshold;
      return os.str();
    }
  }
  return "unknown";
}

namespace {

template <typename Combine>
GridMap fuse_pair(const GridMap& ego, const GridMap& other, Combine combine, const char* op) {
  if (!ego.same_shape(other)) throw InvalidInput(std::string(op) + ": shape mismatch");
  GridMap out = ego;
  const auto ve = ego.validity();
  const auto vj = other.validity();
  auto vo = out.validity();
  const std::size_t cells = ego.cell_count();
  for (std::size_t i = 0; i < cells; ++i) vo[i] = (ve[i] || vj[i]) ? 1 : 0;
  for (int c = 0; c < ego.channels(); ++c) {
    const auto a = ego.plane(c);
    const auto b = other.plane(c);
    auto o = out.plane(c);
    for (std::size_t i = 0; i < cells; ++i) {
      if (ve[i] && vj[i]) {
        o[i] = combine(a[i], b[i]);
      } else if (vj[i]) {
        o[i] = b[i];
      } else if (!ve[i]) {
        o[i] = 0.0;
      }
    }
  }
  return out;
}

}  // namespace

GridMap fuse_cls_max(const GridMap& cls_ego, const GridMap& cls_j) {
  return fuse_pair(cls_ego, cls_j, [](double a, double b) { return std::max(a, b); },
                   "fuse_cls_max");
}

GridMap fuse_reg_mean(const GridMap& reg_ego, const GridMap& reg_j) {
  return fuse_pair(reg_ego, reg_j, [](double a, double b) { return 0.5 * (a + b); },
                   "fuse_reg_mean");
}

GridMap fuse_cls_attention(std::span<const GridMap> cls_maps, std::size_t ego_index,
                           double key_dim) {
  if (cls_maps.empty()) throw UsageError("fuse_cls_attention: no classification maps given");
  if (ego_index >= cls_maps.size()) throw UsageError("fuse_cls_attention: ego index out of range");
  const GridMap& ego = cls_maps[ego_index];
  for (const GridMap& m : cls_maps) {
    if (!m.same_shape(ego)) throw InvalidInput("fuse_cls_attention: shape mismatch");
  }

  GridMap out = ego;
  const int dims = ego.channels();
  const std::size_t cells = ego.cell_count();
  std::vector<std::size_t> rows;
  rows.reserve(cls_maps.size());
  for (std::size_t i = 0; i < cells; ++i) {
    rows.clear();
    std::size_t query = 0;
    for (std::size_t k = 0; k < cls_maps.size(); ++k) {
      if (!cls_maps[k].validity()[i]) continue;
      if (k == ego_index) query = rows.size();
      rows.push_back(k);
    }
    out.validity()[i] = rows.empty() ? 0 : 1;
    if (rows.empty()) continue;
    if (rows.size() == 1) {
      for (int c = 0; c < dims; ++c) out.plane(c)[i] = cls_maps[rows[0]].plane(c)[i];
      continue;
    }
    Matrix x(static_cast<int>(rows.size()), dims);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int c = 0; c < dims; ++c) x(static_cast<int>(r), c) = cls_maps[rows[r]].plane(c)[i];
    }
    const AttentionResult att = scaled_dot_attention(x, key_dim);
    for (int c = 0; c < dims; ++c) out.plane(c)[i] = att.output(static_cast<int>(query), c);
  }
  return out;
}

ComplementaryParams ComplementaryParams::initialize(int reg_channels, std::uint64_t seed) {
  if (reg_channels <= 0) throw InvalidInput("ComplementaryParams: reg_channels must be positive");
  ComplementaryParams p{ConvParams(1, 2 * reg_channels, 1),
                        ConvParams(3, 1, 1),
                        BNParams(1),
                        ConvParams(3, 1, 1),
                        BNParams(1),
                        ConvParams(1, 2 * reg_channels, reg_channels)};
  Rng rng(seed);
  for (ConvParams* c : {&p.conv_delta, &p.conv_a, &p.conv_b, &p.conv_out}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c->in_channels * c->kernel * c->kernel));
    for (double& w : c->weight) w = rng.uniform(-bound, bound);
  }
  return p;
}

std::size_t ComplementaryParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for_each_array([&n](std::span<const double> s) { n += s.size(); });
  return n;
}

void ComplementaryParams::validate() const {
  const int c = conv_out.out_channels;
  conv_delta.validate();
  conv_a.validate();
  conv_b.validate();
  conv_out.validate();
  bn_a.validate();
  bn_b.validate();
  const bool ok = c > 0 && conv_delta.kernel == 1 && conv_delta.in_channels == 2 * c &&
                  conv_delta.out_channels == 1 && conv_a.kernel == 3 && conv_a.in_channels == 1 &&
                  conv_a.out_channels == 1 && conv_b.kernel == 3 && conv_b.in_channels == 1 &&
                  conv_b.out_channels == 1 && bn_a.channels() == 1 && bn_b.channels() == 1 &&
                  conv_out.kernel == 1 && conv_out.in_channels == 2 * c;
  if (!ok) throw InvalidInput("ComplementaryParams: operator shapes are inconsistent");
}

namespace {

template <typename Params, typename Fn>
void visit_arrays(Params& p, Fn&& fn) {
  auto conv = [&](auto& c) {
    fn(c.weight);
    fn(c.bias);
  };
  auto bn = [&](auto& b) {
    fn(b.gamma);
    fn(b.beta);
    fn(b.mean);
    fn(b.var);
  };
  conv(p.conv_delta);
  conv(p.conv_a);
  bn(p.bn_a);
  conv(p.conv_b);
  bn(p.bn_b);
  conv(p.conv_out);
}

}  // namespace

void ComplementaryParams::for_each_array(const std::function<void(std::span<double>)>& fn) {
  visit_arrays(*this, [&fn](std::vector<double>& v) { fn(v); });
}

void ComplementaryParams::for_each_array(
    const std::function<void(std::span<const double>)>& fn) const {
  visit_arrays(*this, [&fn](const std::vector<double>& v) { fn(v); });
}

ComplementaryGraph record_complementary(Tape& tape, const GridMap& reg_ego, const GridMap& reg_j,
                                        const ComplementaryParams& params,
                                        const ComplementaryOptions& options) {
  params.validate();
  if (!reg_ego.same_shape(reg_j)) throw InvalidInput("fuse_reg_complementary: shape mismatch");
  if (reg_ego.channels() != params.reg_channels()) {
    throw InvalidInput("fuse_reg_complementary: params expect " +
                       std::to_string(params.reg_channels()) + " regression channels, got " +
                       std::to_string(reg_ego.channels()));
  }
  ComplementaryGraph g;
  g.overlap = mask_and(reg_ego.validity(), reg_j.validity());

  const Var ego = tape.input(reg_ego);
  const Var other = tape.input(reg_j);
  const Var delta = tape.conv2d(tape.concat(ego, other), params.conv_delta);
  Var branch = tape.relu(tape.batchnorm(tape.conv2d(delta, params.conv_a), params.bn_a));
  branch = tape.sigmoid(tape.batchnorm(tape.conv2d(branch, params.conv_b), params.bn_b));
  g.raw_weight = tape.add(delta, branch);

  if (options.forced_weight) {
    GridMap forced(1, reg_ego.height(), reg_ego.width());
    auto p = forced.plane(0);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = g.overlap[i] ? *options.forced_weight : 0.0;
    g.weight = tape.input(std::move(forced));
  } else if (options.normalization == WeightNormalization::kClamp) {
    g.weight = tape.clamp_unit(g.raw_weight, g.overlap);
  } else {
    g.weight = tape.minmax_normalize(g.raw_weight, g.overlap);
  }

  const Var weighted_ego = tape.scale(ego, g.weight);
  const Var weighted_other = tape.scale(other, tape.one_minus(g.weight));
  const Var mixed = tape.conv2d(tape.concat(weighted_ego, weighted_other), params.conv_out);
  g.fused = tape.select(g.overlap, mixed, ego);
  return g;
}

ComplementaryResult fuse_reg_complementary(const GridMap& reg_ego, const GridMap& reg_j,
                                           const ComplementaryParams& params,
                                           const ComplementaryOptions& options) {
  Tape tape;
  const ComplementaryGraph g = record_complementary(tape, reg_ego, reg_j, params, options);
  return {tape.value(g.fused), tape.value(g.weight)};
}

std::vector<Box3D> filter_by_score(const std::vector<Box3D>& boxes, double threshold) {
  std::vector<Box3D> out;
  std::copy_if(boxes.begin(), boxes.end(), std::back_inserter(out),
               [threshold](const Box3D& b) { return b.score >= threshold; });
  return out;
}

std::vector<Box3D> late_fuse(const std::vector<Box3D>& boxes_ego,
                             const std::vector<Box3D>& boxes_received, double sender_threshold,
                             double nms_iou) {
  // Values above 1 are accepted and transmit nothing.
  if (!(sender_threshold >= 0.0)) throw InvalidInput("late_fuse: sender_threshold must be >= 0");
  std::vector<Box3D> pool = boxes_ego;
  const auto sent = filter_by_score(boxes_received, sender_threshold);
  pool.insert(pool.end(), sent.begin(), sent.end());
  return nms(std::move(pool), nms_iou);
}

}  // namespace headfuse
