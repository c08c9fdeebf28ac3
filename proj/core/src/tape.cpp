#include "headfuse/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

GridMap zeros_like(const GridMap& m) {
  GridMap z = m;
  std::fill(z.values().begin(), z.values().end(), 0.0);
  return z;
}

ConvParams zero_conv_like(const ConvParams& p) {
  ConvParams z = p;
  std::fill(z.weight.begin(), z.weight.end(), 0.0);
  std::fill(z.bias.begin(), z.bias.end(), 0.0);
  return z;
}

BNParams zero_bn_like(const BNParams& p) {
  BNParams z = p;
  for (auto* v : {&z.gamma, &z.beta, &z.mean, &z.var}) std::fill(v->begin(), v->end(), 0.0);
  return z;
}

}  // namespace

Var Tape::push(GridMap value, std::function<void(Tape&, std::size_t)> backward) {
  nodes_.push_back(Node{std::move(value), GridMap{}, std::move(backward)});
  has_backward_ = false;
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw UsageError("Var " + (v.id == Var::kNone ? std::string("<none>") : std::to_string(v.id)) +
                     " was not recorded on this tape");
  }
  return nodes_[v.id];
}

const GridMap& Tape::value(Var v) const { return node(v).value; }

const GridMap& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!has_backward_) throw UsageError("Tape::grad called before backward()");
  return n.grad;
}

ConvParams& Tape::conv_grad_slot(const ConvParams* p) {
  auto it = conv_grads_.find(p);
  if (it == conv_grads_.end()) it = conv_grads_.emplace(p, zero_conv_like(*p)).first;
  return it->second;
}

BNParams& Tape::bn_grad_slot(const BNParams* p) {
  auto it = bn_grads_.find(p);
  if (it == bn_grads_.end()) it = bn_grads_.emplace(p, zero_bn_like(*p)).first;
  return it->second;
}

ConvParams Tape::grad(const ConvParams& p) const {
  if (!has_backward_) throw UsageError("Tape::grad called before backward()");
  auto it = conv_grads_.find(&p);
  return it == conv_grads_.end() ? zero_conv_like(p) : it->second;
}

BNParams Tape::grad(const BNParams& p) const {
  if (!has_backward_) throw UsageError("Tape::grad called before backward()");
  auto it = bn_grads_.find(&p);
  return it == bn_grads_.end() ? zero_bn_like(p) : it->second;
}

Var Tape::input(GridMap value) { return push(std::move(value), nullptr); }

Var Tape::conv2d(Var x, const ConvParams& p) {
  GridMap out = headfuse::conv2d(value(x), p);
  const ConvParams* pp = &p;
  return push(std::move(out), [xid = x.id, pp](Tape& t, std::size_t self) {
    const GridMap& dy = t.nodes_[self].grad;
    const GridMap& in = t.nodes_[xid].value;
    GridMap& dx = t.grad_ref(xid);
    ConvParams& g = t.conv_grad_slot(pp);
    const int h = in.height();
    const int w = in.width();
    const int k = pp->kernel;
    const int pad = k / 2;
    for (int o = 0; o < pp->out_channels; ++o) {
      auto gy = dy.plane(o);
      double bsum = 0.0;
      for (double v : gy) bsum += v;
      g.bias[o] += bsum;
      for (int i = 0; i < pp->in_channels; ++i) {
        auto src = in.plane(i);
        auto gx = dx.plane(i);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const std::size_t widx = pp->weight_index(o, i, ky, kx);
            const double wv = pp->weight[widx];
            const int dyo = ky - pad;
            const int dxo = kx - pad;
            const int y0 = std::max(0, -dyo);
            const int y1 = std::min(h, h - dyo);
            const int x0 = std::max(0, -dxo);
            const int x1 = std::min(w, w - dxo);
            double wsum = 0.0;
            for (int y = y0; y < y1; ++y) {
              const std::size_t srow = static_cast<std::size_t>(y + dyo) * w;
              const std::size_t drow = static_cast<std::size_t>(y) * w;
              for (int xx = x0; xx < x1; ++xx) {
                const double gv = gy[drow + xx];
                wsum += gv * src[srow + xx + dxo];
                gx[srow + xx + dxo] += wv * gv;
              }
            }
            g.weight[widx] += wsum;
          }
        }
      }
    }
  });
}

Var Tape::batchnorm(Var x, const BNParams& p) {
  GridMap out = headfuse::batchnorm_infer(value(x), p);
  const BNParams* pp = &p;
  return push(std::move(out), [xid = x.id, pp](Tape& t, std::size_t self) {
    const GridMap& dy = t.nodes_[self].grad;
    const GridMap& in = t.nodes_[xid].value;
    GridMap& dx = t.grad_ref(xid);
    BNParams& g = t.bn_grad_slot(pp);
    for (int c = 0; c < in.channels(); ++c) {
      const double denom = pp->var[c] + pp->eps;
      const double inv_std = 1.0 / std::sqrt(denom);
      const double s = pp->gamma[c] * inv_std;
      const double mu = pp->mean[c];
      auto gy = dy.plane(c);
      auto xv = in.plane(c);
      auto gx = dx.plane(c);
      double sum_dy = 0.0;
      double sum_dy_xc = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const double xc = xv[i] - mu;
        sum_dy += gy[i];
        sum_dy_xc += gy[i] * xc;
        gx[i] += gy[i] * s;
      }
      g.gamma[c] += sum_dy_xc * inv_std;
      g.beta[c] += sum_dy;
      g.mean[c] += -s * sum_dy;
      g.var[c] += sum_dy_xc * pp->gamma[c] * -0.5 * inv_std / denom;
    }
  });
}

Var Tape::relu(Var x) {
  return push(headfuse::relu(value(x)), [xid = x.id](Tape& t, std::size_t self) {
    const auto gy = t.nodes_[self].grad.values();
    const auto xv = t.nodes_[xid].value.values();
    auto gx = t.grad_ref(xid).values();
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var Tape::sigmoid(Var x) {
  return push(headfuse::sigmoid(value(x)), [xid = x.id](Tape& t, std::size_t self) {
    const auto gy = t.nodes_[self].grad.values();
    const auto yv = t.nodes_[self].value.values();
    auto gx = t.grad_ref(xid).values();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var Tape::add(Var a, Var b) {
  const GridMap& av = value(a);
  const GridMap& bv = value(b);
  if (!av.same_shape(bv)) throw InvalidInput("Tape::add: shape mismatch");
  GridMap out = av;
  auto o = out.values();
  auto bs = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bs[i];
  return push(std::move(out), [aid = a.id, bid = b.id](Tape& t, std::size_t self) {
    const auto gy = t.nodes_[self].grad.values();
    auto ga = t.grad_ref(aid).values();
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    auto gb = t.grad_ref(bid).values();
    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
  });
}

Var Tape::scale(Var a, Var weight) {
  const GridMap& av = value(a);
  const GridMap& wv = value(weight);
  if (wv.channels() != 1 || !av.same_extent(wv)) {
    throw InvalidInput("Tape::scale: weight must be a single-channel map of the same extent");
  }
  GridMap out = av;
  const auto wp = wv.plane(0);
  for (int c = 0; c < out.channels(); ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= wp[i];
  }
  return push(std::move(out), [aid = a.id, wid = weight.id](Tape& t, std::size_t self) {
    const GridMap& gy = t.nodes_[self].grad;
    const GridMap& av = t.nodes_[aid].value;
    const auto wp = t.nodes_[wid].value.plane(0);
    GridMap& ga = t.grad_ref(aid);
    auto gw = t.grad_ref(wid).plane(0);
    for (int c = 0; c < gy.channels(); ++c) {
      const auto g = gy.plane(c);
      const auto x = av.plane(c);
      auto gac = ga.plane(c);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gac[i] += g[i] * wp[i];
        gw[i] += g[i] * x[i];
      }
    }
  });
}

Var Tape::one_minus(Var a) {
  GridMap out = value(a);
  for (double& v : out.values()) v = 1.0 - v;
  return push(std::move(out), [aid = a.id](Tape& t, std::size_t self) {
    const auto gy = t.nodes_[self].grad.values();
    auto ga = t.grad_ref(aid).values();
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] -= gy[i];
  });
}

Var Tape::concat(Var a, Var b) {
  GridMap out = concat_channels(value(a), value(b));
  return push(std::move(out), [aid = a.id, bid = b.id](Tape& t, std::size_t self) {
    const auto gy = t.nodes_[self].grad.values();
    auto ga = t.grad_ref(aid).values();
    auto gb = t.grad_ref(bid).values();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[ga.size() + i];
  });
}

Var Tape::minmax_normalize(Var x, std::span<const std::uint8_t> mask) {
  const GridMap& xv = value(x);
  if (xv.channels() != 1) throw InvalidInput("minmax_normalize: expects a single-channel map");
  if (mask.size() != xv.cell_count()) throw InvalidInput("minmax_normalize: mask size mismatch");

  const auto p = xv.plane(0);
  std::size_t imin = Var::kNone;
  std::size_t imax = Var::kNone;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    if (imin == Var::kNone || p[i] < p[imin]) imin = i;
    if (imax == Var::kNone || p[i] > p[imax]) imax = i;
  }
  GridMap out = zeros_like(xv);
  auto o = out.plane(0);
  const double range = imin == Var::kNone ? 0.0 : p[imax] - p[imin];
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    o[i] = range > 0.0 ? (p[i] - p[imin]) / range : 0.5;
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return push(std::move(out), [xid = x.id, m = std::move(m), imin, imax,
                               range](Tape& t, std::size_t self) {
    if (!(range > 0.0)) return;
    const auto gy = t.nodes_[self].grad.plane(0);
    const auto xs = t.nodes_[xid].value.plane(0);
    auto gx = t.grad_ref(xid).plane(0);
    const double lo = xs[imin];
    const double hi = xs[imax];
    const double r2 = range * range;
    double g_lo = 0.0;
    double g_hi = 0.0;
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (!m[i]) continue;
      gx[i] += gy[i] / range;
      g_lo += gy[i] * (xs[i] - hi) / r2;
      g_hi -= gy[i] * (xs[i] - lo) / r2;
    }
    gx[imin] += g_lo;
    gx[imax] += g_hi;
  });
}

Var Tape::clamp_unit(Var x, std::span<const std::uint8_t> mask) {
  const GridMap& xv = value(x);
  if (xv.channels() != 1) throw InvalidInput("clamp_unit: expects a single-channel map");
  if (mask.size() != xv.cell_count()) throw InvalidInput("clamp_unit: mask size mismatch");
  GridMap out = zeros_like(xv);
  const auto p = xv.plane(0);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i]) o[i] = std::clamp(p[i], 0.0, 1.0);
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return push(std::move(out), [xid = x.id, m = std::move(m)](Tape& t, std::size_t self) {
    const auto gy = t.nodes_[self].grad.plane(0);
    const auto xs = t.nodes_[xid].value.plane(0);
    auto gx = t.grad_ref(xid).plane(0);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (m[i] && xs[i] > 0.0 && xs[i] < 1.0) gx[i] += gy[i];
    }
  });
}

Var Tape::select(std::span<const std::uint8_t> mask, Var where_true, Var where_false) {
  const GridMap& tv = value(where_true);
  const GridMap& fv = value(where_false);
  if (!tv.same_shape(fv)) throw InvalidInput("Tape::select: shape mismatch");
  if (mask.size() != tv.cell_count()) throw InvalidInput("Tape::select: mask size mismatch");
  GridMap out = fv;
  for (int c = 0; c < out.channels(); ++c) {
    auto o = out.plane(c);
    const auto s = tv.plane(c);
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (mask[i]) o[i] = s[i];
    }
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return push(std::move(out), [tid = where_true.id, fid = where_false.id,
                               m = std::move(m)](Tape& t, std::size_t self) {
    const GridMap& gy = t.nodes_[self].grad;
    GridMap& gt = t.grad_ref(tid);
    GridMap& gf = t.grad_ref(fid);
    for (int c = 0; c < gy.channels(); ++c) {
      const auto g = gy.plane(c);
      auto a = gt.plane(c);
      auto b = gf.plane(c);
      for (std::size_t i = 0; i < g.size(); ++i) (m[i] ? a[i] : b[i]) += g[i];
    }
  });
}

Var Tape::sum(Var x) {
  double total = 0.0;
  for (double v : value(x).values()) total += v;
  return push(GridMap(1, 1, 1, total), [xid = x.id](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad.values()[0];
    for (double& v : t.grad_ref(xid).values()) v += g;
  });
}

Var Tape::smooth_l1(Var pred, const GridMap& target, std::span<const std::uint8_t> element_mask,
                    double beta) {
  const GridMap& pv = value(pred);
  if (!pv.same_shape(target)) throw InvalidInput("smooth_l1: prediction/target shape mismatch");
  if (element_mask.size() != pv.size()) throw InvalidInput("smooth_l1: mask size mismatch");
  if (!(beta > 0.0)) throw InvalidInput("smooth_l1: beta must be positive");

  const auto p = pv.values();
  const auto q = target.values();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!element_mask[i]) continue;
    const double d = p[i] - q[i];
    const double ad = std::abs(d);
    total += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
    ++count;
  }
  const double loss = count ? total / static_cast<double>(count) : 0.0;
  std::vector<std::uint8_t> m(element_mask.begin(), element_mask.end());
  std::vector<double> tgt(q.begin(), q.end());
  return push(GridMap(1, 1, 1, loss), [pid = pred.id, m = std::move(m), tgt = std::move(tgt), count,
                                       beta](Tape& t, std::size_t self) {
    if (count == 0) return;
    const double g = t.nodes_[self].grad.values()[0] / static_cast<double>(count);
    const auto p = t.nodes_[pid].value.values();
    auto gp = t.grad_ref(pid).values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!m[i]) continue;
      const double d = p[i] - tgt[i];
      const double slope = std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0);
      gp[i] += g * slope;
    }
  });
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw UsageError("Tape::backward on an empty tape");
  const Node& ln = node(loss);
  if (ln.value.size() != 1) throw UsageError("Tape::backward: loss must be a scalar (1x1x1) value");

  for (Node& n : nodes_) n.grad = zeros_like(n.value);
  conv_grads_.clear();
  bn_grads_.clear();
  nodes_[loss.id].grad.values()[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  has_backward_ = true;
}

}  // namespace headfuse
