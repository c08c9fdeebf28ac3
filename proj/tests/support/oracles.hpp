#ifndef HEADFUSE_TESTS_ORACLES_HPP_
#define HEADFUSE_TESTS_ORACLES_HPP_

// Independent reference implementations. They share nothing with the
// library beyond the plain data types and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "headfuse/fusion.hpp"
#include "headfuse/geometry.hpp"
#include "headfuse/grid.hpp"
#include "headfuse/random.hpp"

namespace oracle {

using headfuse::BNParams;
using headfuse::Box3D;
using headfuse::ConvParams;
using headfuse::GridMap;

inline GridMap random_map(headfuse::Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0,
                          double invalid_fraction = 0.0) {
  GridMap m(c, h, w);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  for (auto& v : m.validity()) v = rng.uniform() < invalid_fraction ? 0 : 1;
  for (int c = 0; c < m.channels(); ++c) {
    for (std::size_t i = 0; i < m.cell_count(); ++i) {
      if (!m.validity()[i]) m.plane(c)[i] = 0.0;
    }
  }
  return m;
}

inline void randomize(headfuse::Rng& rng, ConvParams& p, double scale = 0.5) {
  for (double& v : p.weight) v = rng.uniform(-scale, scale);
  for (double& v : p.bias) v = rng.uniform(-scale, scale);
}

inline void randomize(headfuse::Rng& rng, BNParams& p) {
  for (double& v : p.gamma) v = rng.uniform(0.5, 1.5);
  for (double& v : p.beta) v = rng.uniform(-0.5, 0.5);
  for (double& v : p.mean) v = rng.uniform(-0.5, 0.5);
  for (double& v : p.var) v = rng.uniform(0.2, 2.0);
}

// Direct 4-deep loop, zero outside the map.
inline GridMap conv2d(const GridMap& in, const ConvParams& p) {
  const int h = in.height();
  const int w = in.width();
  const int r = p.kernel / 2;
  GridMap out(p.out_channels, h, w);
  for (int o = 0; o < p.out_channels; ++o) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = p.bias[o];
        for (int i = 0; i < p.in_channels; ++i) {
          for (int ky = 0; ky < p.kernel; ++ky) {
            for (int kx = 0; kx < p.kernel; ++kx) {
              const int yy = y + ky - r;
              const int xx = x + kx - r;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += p.weight[((o * p.in_channels + i) * p.kernel + ky) * p.kernel + kx] * in.at(i, yy, xx);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  for (std::size_t i = 0; i < out.validity().size(); ++i) out.validity()[i] = in.validity()[i];
  return out;
}

inline double bn(double x, const BNParams& p, int c) {
  return (x - p.mean[c]) / std::sqrt(p.var[c] + p.eps) * p.gamma[c] + p.beta[c];
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Element-wise combination with the union-validity rule.
template <typename Op>
GridMap pairwise(const GridMap& a, const GridMap& b, Op op) {
  GridMap out(a.channels(), a.height(), a.width());
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      const bool va = a.valid(y, x);
      const bool vb = b.valid(y, x);
      out.set_valid(y, x, va || vb);
      for (int c = 0; c < a.channels(); ++c) {
        double v = 0.0;
        if (va && vb) {
          v = op(a.at(c, y, x), b.at(c, y, x));
        } else if (va) {
          v = a.at(c, y, x);
        } else if (vb) {
          v = b.at(c, y, x);
        }
        out.at(c, y, x) = v;
      }
    }
  }
  return out;
}

inline GridMap max_fusion(const GridMap& a, const GridMap& b) {
  return pairwise(a, b, [](double p, double q) { return p > q ? p : q; });
}

inline GridMap mean_fusion(const GridMap& a, const GridMap& b) {
  return pairwise(a, b, [](double p, double q) { return (p + q) / 2.0; });
}

struct Complementary {
  GridMap fused;
  std::vector<double> weight;
};

// Straight-line scalar evaluation of the complementary regression fusion.
inline Complementary complementary(const GridMap& ego, const GridMap& other,
                                   const headfuse::ComplementaryParams& p) {
  const int c = ego.channels();
  const int h = ego.height();
  const int w = ego.width();
  const int n = h * w;
  auto cell = [w](int y, int x) { return y * w + x; };

  std::vector<double> delta(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = p.conv_delta.bias[0];
      for (int k = 0; k < c; ++k) acc += p.conv_delta.weight[k] * ego.at(k, y, x);
      for (int k = 0; k < c; ++k) acc += p.conv_delta.weight[c + k] * other.at(k, y, x);
      delta[cell(y, x)] = acc;
    }
  }
  auto conv3 = [&](const std::vector<double>& in, const ConvParams& cp) {
    std::vector<double> out(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = cp.bias[0];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int yy = y + ky - 1;
            const int xx = x + kx - 1;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += cp.weight[ky * 3 + kx] * in[cell(yy, xx)];
          }
        }
        out[cell(y, x)] = acc;
      }
    }
    return out;
  };
  std::vector<double> a = conv3(delta, p.conv_a);
  for (double& v : a) v = std::max(0.0, bn(v, p.bn_a, 0));
  std::vector<double> b = conv3(a, p.conv_b);
  for (double& v : b) v = sigmoid(bn(v, p.bn_b, 0));

  std::vector<bool> overlap(n);
  double lo = INFINITY;
  double hi = -INFINITY;
  std::vector<double> raw(n);
  for (int i = 0; i < n; ++i) {
    raw[i] = delta[i] + b[i];
    overlap[i] = ego.validity()[i] && other.validity()[i];
    if (overlap[i]) {
      lo = std::min(lo, raw[i]);
      hi = std::max(hi, raw[i]);
    }
  }
  Complementary out{ego, std::vector<double>(n, 0.0)};
  for (int i = 0; i < n; ++i) {
    if (!overlap[i]) continue;
    out.weight[i] = hi > lo ? (raw[i] - lo) / (hi - lo) : 0.5;
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = cell(y, x);
      if (!overlap[i]) continue;
      const double m = out.weight[i];
      for (int o = 0; o < c; ++o) {
        double acc = p.conv_out.bias[o];
        for (int k = 0; k < c; ++k) acc += p.conv_out.weight[o * 2 * c + k] * m * ego.at(k, y, x);
        for (int k = 0; k < c; ++k) {
          acc += p.conv_out.weight[o * 2 * c + c + k] * (1.0 - m) * other.at(k, y, x);
        }
        out.fused.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

// Monte-Carlo BEV IoU from uniform samples over the joint bounding square.
inline double monte_carlo_iou(const Box3D& a, const Box3D& b, int samples, std::uint64_t seed) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Box3D* box : {&a, &b}) {
    for (const auto& c : box->corners()) {
      x0 = std::min(x0, c.x);
      x1 = std::max(x1, c.x);
      y0 = std::min(y0, c.y);
      y1 = std::max(y1, c.y);
    }
  }
  headfuse::Rng rng(seed);
  long in_a = 0, in_b = 0, both = 0;
  auto inside = [](const Box3D& box, double px, double py) {
    const double dx = px - box.x;
    const double dy = py - box.y;
    const double u = dx * std::cos(box.yaw) + dy * std::sin(box.yaw);
    const double v = -dx * std::sin(box.yaw) + dy * std::cos(box.yaw);
    return std::abs(u) <= box.l / 2 && std::abs(v) <= box.w / 2;
  };
  for (int i = 0; i < samples; ++i) {
    const double px = rng.uniform(x0, x1);
    const double py = rng.uniform(y0, y1);
    const bool ia = inside(a, px, py);
    const bool ib = inside(b, px, py);
    in_a += ia;
    in_b += ib;
    both += ia && ib;
  }
  const double area = (x1 - x0) * (y1 - y0);
  const double inter = area * both / samples;
  // Exact footprint areas keep the estimate's variance to the intersection term.
  return inter / (a.l * a.w + b.l * b.w - inter);
}

// Precision envelope integrated over recall steps, written out directly.
inline double all_point_ap(const std::vector<bool>& ranked_tp, int gt_count) {
  std::vector<double> prec, rec;
  int tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    tp += ranked_tp[i];
    prec.push_back(double(tp) / double(i + 1));
    rec.push_back(double(tp) / gt_count);
  }
  double ap = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < prec.size(); ++i) {
    double best = 0.0;
    for (std::size_t k = i; k < prec.size(); ++k) best = std::max(best, prec[k]);
    ap += (rec[i] - last) * best;
    last = rec[i];
  }
  return ap;
}

// Central difference of `loss()` in one scalar parameter, restored afterwards.
template <typename Loss>
double central_difference(double& param, Loss&& loss, double step = 1e-5) {
  const double saved = param;
  param = saved + step;
  const double up = loss();
  param = saved - step;
  const double down = loss();
  param = saved;
  return (up - down) / (2.0 * step);
}

// |a - b| relative to the larger magnitude, with a floor for near-zero pairs.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle

#endif  // HEADFUSE_TESTS_ORACLES_HPP_
