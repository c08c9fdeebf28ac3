#include "headfuse/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <spdlog/spdlog.h>

#include "headfuse/bandwidth.hpp"
#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

struct Ranked {
  double score;
  std::size_t frame;
  std::size_t index;
  const Box3D* box;
};

std::vector<Ranked> rank_all(std::span<const FrameDetections> frames) {
  std::vector<Ranked> all;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t i = 0; i < frames[f].detections.size(); ++i) {
      const Box3D& b = frames[f].detections[i];
      if (!std::isfinite(b.score)) throw InvalidInput("evaluation: detection without a finite score");
      all.push_back({b.score, f, i, &b});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.frame, a.box->x, a.box->y, a.box->yaw) <
           std::tie(b.frame, b.box->x, b.box->y, b.box->yaw);
  });
  return all;
}

// TP flag per ranked detection.
std::vector<bool> match(std::span<const FrameDetections> frames, const std::vector<Ranked>& ranked,
                        double iou_threshold) {
  std::vector<std::vector<bool>> used(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) used[f].assign(frames[f].ground_truth.size(), false);
  std::vector<bool> tp(ranked.size(), false);
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const auto& gts = frames[ranked[k].frame].ground_truth;
    auto& taken = used[ranked[k].frame];
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double iou = rotated_iou(*ranked[k].box, gts[g]);
      if (iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best >= iou_threshold) {
      taken[best_g] = true;
      tp[k] = true;
    }
  }
  return tp;
}

void check_iou(double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw InvalidInput("IoU threshold must be in (0, 1]");
  }
}

std::string fmt_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

}  // namespace

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw InvalidInput("EvalConfig: no IoU thresholds");
  for (double t : iou_thresholds) check_iou(t);
}

std::vector<double> EvalConfig::sweep_grid() const {
  if (!sweep_thresholds.empty()) return sweep_thresholds;
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  return grid;
}

ApResult evaluate_ap(std::span<const FrameDetections> frames, double iou_threshold,
                     ApVariant variant) {
  check_iou(iou_threshold);
  ApResult r;
  for (const auto& f : frames) {
    r.gt_count += f.ground_truth.size();
    r.det_count += f.detections.size();
  }
  const auto ranked = rank_all(frames);
  if (r.gt_count == 0) {
    spdlog::warn("average precision requested with zero ground-truth boxes; reporting 0");
    r.no_ground_truth = true;
    return r;
  }
  const auto tp = match(frames, ranked, iou_threshold);
  std::size_t tps = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (tp[k]) ++tps;
    r.curve.emplace_back(static_cast<double>(tps) / static_cast<double>(r.gt_count),
                         static_cast<double>(tps) / static_cast<double>(k + 1));
  }
  r.tp_count = tps;
  if (r.curve.empty()) return r;

  std::vector<double> envelope(r.curve.size());
  double running = 0.0;
  for (std::size_t k = r.curve.size(); k-- > 0;) {
    running = std::max(running, r.curve[k].second);
    envelope[k] = running;
  }
  if (variant == ApVariant::kAllPoint) {
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < r.curve.size(); ++k) {
      r.ap += (r.curve[k].first - prev_recall) * envelope[k];
      prev_recall = r.curve[k].first;
    }
  } else {
    for (int i = 0; i <= 10; ++i) {
      const double level = i / 10.0;
      double best = 0.0;
      for (std::size_t k = 0; k < r.curve.size(); ++k) {
        if (r.curve[k].first >= level - 1e-12) {
          best = envelope[k];
          break;
        }
      }
      r.ap += best / 11.0;
    }
  }
  r.ap = std::clamp(r.ap, 0.0, 1.0);
  return r;
}

double average_precision(std::span<const FrameDetections> frames, double iou_threshold,
                         ApVariant variant) {
  return evaluate_ap(frames, iou_threshold, variant).ap;
}

std::vector<LabeledDetection> label_detections(std::span<const FrameDetections> frames,
                                               double iou_threshold) {
  check_iou(iou_threshold);
  const auto ranked = rank_all(frames);
  const auto tp = match(frames, ranked, iou_threshold);
  std::vector<LabeledDetection> out;
  out.reserve(ranked.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) out.push_back({ranked[k].score, tp[k]});
  return out;
}

FpSweep fp_threshold_sweep(std::span<const LabeledDetection> detections,
                           std::span<const double> thresholds) {
  FpSweep s;
  std::vector<double> grid(thresholds.begin(), thresholds.end());
  std::sort(grid.begin(), grid.end());
  double max_fp = -std::numeric_limits<double>::infinity();
  bool any_fp = false;
  for (const auto& d : detections) {
    if (!d.true_positive) {
      any_fp = true;
      max_fp = std::max(max_fp, d.score);
    }
  }
  s.zero_fp_threshold = any_fp ? std::nextafter(max_fp, std::numeric_limits<double>::infinity()) : 0.0;
  for (double t : grid) {
    FpPoint p{t, 0, 0};
    for (const auto& d : detections) {
      if (!(d.score >= t)) continue;
      if (d.true_positive) {
        ++p.tp_count;
      } else {
        ++p.fp_count;
      }
    }
    if (p.fp_count == 0 && !s.grid_zero_fp_threshold) s.grid_zero_fp_threshold = t;
    s.curve.push_back(p);
  }
  return s;
}

std::string FpSweep::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10) << "threshold,fp_count,tp_count\n";
  for (const auto& p : curve) os << p.threshold << ',' << p.fp_count << ',' << p.tp_count << '\n';
  return os.str();
}

nlohmann::json FpSweep::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : curve) {
    pts.push_back({{"threshold", p.threshold}, {"fp_count", p.fp_count}, {"tp_count", p.tp_count}});
  }
  return {{"curve", pts},
          {"zero_fp_threshold", zero_fp_threshold},
          {"grid_zero_fp_threshold",
           grid_zero_fp_threshold ? nlohmann::json(*grid_zero_fp_threshold) : nlohmann::json(nullptr)}};
}

std::vector<FrameDetections> sender_frames(std::span<const EpisodeResult> episodes) {
  std::vector<FrameDetections> out;
  for (const auto& e : episodes) {
    for (const auto& f : e.frames) {
      if (f.sender) out.push_back({f.sender_detections, f.sender_ground_truth});
    }
  }
  return out;
}

std::vector<FrameDetections> ego_frames(std::span<const EpisodeResult> episodes) {
  std::vector<FrameDetections> out;
  for (const auto& e : episodes) {
    for (const auto& f : e.frames) out.push_back({f.detections, f.ground_truth});
  }
  return out;
}

ComparisonRow summarize(const std::string& strategy, std::span<const EpisodeResult> episodes,
                        const EvalConfig& eval, double fps) {
  eval.validate();
  ComparisonRow row;
  row.strategy = strategy;
  const auto frames = ego_frames(episodes);
  for (const auto& f : frames) row.gt_count += f.ground_truth.size();
  for (double iou : eval.iou_thresholds) {
    const double ap = average_precision(frames, iou, eval.variant);
    if (std::abs(iou - 0.5) < 1e-12) row.ap50 = ap;
    if (std::abs(iou - 0.7) < 1e-12) row.ap70 = ap;
  }
  std::vector<std::size_t> sizes;
  for (const auto& e : episodes) {
    for (const auto& f : e.frames) {
      if (f.sender) sizes.push_back(f.message_bytes);
    }
  }
  if (!sizes.empty()) {
    row.bytes_per_frame = std::accumulate(sizes.begin(), sizes.end(), 0.0) / static_cast<double>(sizes.size());
  }
  row.mbps = megabits_per_second(row.bytes_per_frame, fps);
  return row;
}

ComparisonTable compare_strategies(std::span<const Scenario> scenarios,
                                   std::span<const FusionStrategy> strategies,
                                   const ComplementaryParams* params,
                                   const CompareOptions& options) {
  options.eval.validate();
  options.thresholds.validate();
  if (!(options.fps > 0.0)) throw InvalidInput("compare_strategies: fps must be positive");
  for (const auto& s : strategies) {
    s.validate();
    if (s.kind == StrategyKind::kHomoHead && params == nullptr) {
      throw ConfigError("HomoHead needs trained complementary parameters");
    }
  }

  const std::size_t n = scenarios.size();
  std::vector<std::vector<EpisodeResult>> results(strategies.size(), std::vector<EpisodeResult>(n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        for (std::size_t k = 0; k < strategies.size(); ++k) {
          results[k][i] = run_episode(scenarios[i], strategies[k], params, options.thresholds, options.episode);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ComparisonTable table;
  table.fps = options.fps;
  for (std::size_t k = 0; k < strategies.size(); ++k) {
    table.rows.push_back(summarize(strategy_name(strategies[k]), results[k], options.eval, options.fps));
  }
  if (options.intermediate_row && !scenarios.empty()) {
    const BEVGridSpec& g = scenarios.front().grid;
    ComparisonRow row;
    row.strategy = "intermediate";
    row.bytes_per_frame = dense_map_bytes(options.intermediate_channels, g.height(), g.width());
    row.mbps = megabits_per_second(row.bytes_per_frame, options.fps);
    table.rows.push_back(row);
  }
  return table;
}

const ComparisonRow* ComparisonTable::find(const std::string& strategy) const {
  for (const auto& r : rows) {
    if (r.strategy == strategy) return &r;
  }
  return nullptr;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10) << "strategy,ap50,ap70,bytes_per_frame,mbps\n";
  for (const auto& r : rows) {
    os << r.strategy << ',' << fmt_optional(r.ap50) << ',' << fmt_optional(r.ap70) << ','
       << r.bytes_per_frame << ',' << r.mbps << '\n';
  }
  return os.str();
}

nlohmann::json ComparisonTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"strategy", r.strategy},
                   {"ap50", r.ap50 ? nlohmann::json(*r.ap50) : nlohmann::json(nullptr)},
                   {"ap70", r.ap70 ? nlohmann::json(*r.ap70) : nlohmann::json(nullptr)},
                   {"bytes_per_frame", r.bytes_per_frame},
                   {"mbps", r.mbps},
                   {"gt_count", r.gt_count}});
  }
  return {{"fps", fps}, {"rows", arr}};
}

}  // namespace headfuse
