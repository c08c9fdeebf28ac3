#include "headfuse/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

void require_positive_dims(int c, int h, int w) {
  if (c <= 0 || h <= 0 || w <= 0) {
    throw InvalidInput("GridMap dimensions must be positive, got " + std::to_string(c) + "x" +
                       std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

GridMap::GridMap(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require_positive_dims(channels, height, width);
  values_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  validity_.assign(static_cast<std::size_t>(height) * width, 1);
}

GridMap GridMap::from_values(int channels, int height, int width, std::vector<double> values,
                             std::vector<std::uint8_t> validity) {
  require_positive_dims(channels, height, width);
  const std::size_t cells = static_cast<std::size_t>(height) * width;
  if (values.size() != cells * channels) {
    throw InvalidInput("GridMap value count " + std::to_string(values.size()) +
                       " does not match C*H*W = " + std::to_string(cells * channels));
  }
  if (validity.empty()) validity.assign(cells, 1);
  if (validity.size() != cells) {
    throw InvalidInput("GridMap validity size " + std::to_string(validity.size()) +
                       " does not match H*W = " + std::to_string(cells));
  }
  GridMap m;
  m.channels_ = channels;
  m.height_ = height;
  m.width_ = width;
  m.values_ = std::move(values);
  m.validity_ = std::move(validity);
  for (auto& v : m.validity_) v = v ? 1 : 0;
  return m;
}

GridMap GridMap::channel_slice(int first, int count) const {
  if (first < 0 || count <= 0 || first + count > channels_) {
    throw InvalidInput("channel slice out of range");
  }
  GridMap out(count, height_, width_);
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(first * cell_count()),
              count * cell_count(), out.values_.begin());
  out.validity_ = validity_;
  return out;
}

bool GridMap::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridMap concat_channels(const GridMap& a, const GridMap& b) {
  if (!a.same_extent(b)) throw InvalidInput("concat_channels: spatial extents differ");
  std::vector<double> values;
  values.reserve(a.size() + b.size());
  values.insert(values.end(), a.values().begin(), a.values().end());
  values.insert(values.end(), b.values().begin(), b.values().end());
  return GridMap::from_values(a.channels() + b.channels(), a.height(), a.width(), std::move(values),
                              std::vector<std::uint8_t>(a.validity().begin(), a.validity().end()));
}

std::vector<std::uint8_t> mask_and(std::span<const std::uint8_t> a,
                                   std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw InvalidInput("mask_and: size mismatch");
  std::vector<std::uint8_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> mask_or(std::span<const std::uint8_t> a,
                                  std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw InvalidInput("mask_or: size mismatch");
  std::vector<std::uint8_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

ConvParams::ConvParams(int kernel_size, int in, int out)
    : kernel(kernel_size),
      in_channels(in),
      out_channels(out),
      weight(static_cast<std::size_t>(out) * in * kernel_size * kernel_size, 0.0),
      bias(static_cast<std::size_t>(out), 0.0) {
  validate();
}

void ConvParams::validate() const {
  if (kernel != 1 && kernel != 3) {
    throw InvalidInput("ConvParams: kernel size must be 1 or 3, got " + std::to_string(kernel));
  }
  if (in_channels <= 0 || out_channels <= 0) {
    throw InvalidInput("ConvParams: channel counts must be positive");
  }
  if (weight.size() != static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel) {
    throw InvalidInput("ConvParams: weight length does not match out*in*k*k");
  }
  if (bias.size() != static_cast<std::size_t>(out_channels)) {
    throw InvalidInput("ConvParams: bias length does not match out channels");
  }
}

BNParams::BNParams(int channels, double epsilon)
    : gamma(static_cast<std::size_t>(channels), 1.0),
      beta(static_cast<std::size_t>(channels), 0.0),
      mean(static_cast<std::size_t>(channels), 0.0),
      var(static_cast<std::size_t>(channels), 1.0),
      eps(epsilon) {
  validate();
}

void BNParams::validate() const {
  const std::size_t n = gamma.size();
  if (n == 0 || beta.size() != n || mean.size() != n || var.size() != n) {
    throw InvalidInput("BNParams: gamma/beta/mean/var lengths must agree and be non-zero");
  }
  if (!(eps >= 0.0)) throw InvalidInput("BNParams: eps must be non-negative");
  for (double v : var) {
    if (v < 0.0) throw InvalidInput("BNParams: negative running variance");
    if (!(v + eps > 0.0)) throw InvalidInput("BNParams: var + eps must be positive");
  }
}

GridMap conv2d(const GridMap& input, const ConvParams& p) {
  p.validate();
  if (input.channels() != p.in_channels) {
    throw InvalidInput("conv2d: input has " + std::to_string(input.channels()) +
                       " channels, kernel expects " + std::to_string(p.in_channels));
  }
  const int h = input.height();
  const int w = input.width();
  const int k = p.kernel;
  const int pad = k / 2;
  GridMap out(p.out_channels, h, w);
  std::copy(input.validity().begin(), input.validity().end(), out.validity().begin());

  for (int o = 0; o < p.out_channels; ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), p.bias[o]);
    for (int i = 0; i < p.in_channels; ++i) {
      auto src = input.plane(i);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = p.weight[p.weight_index(o, i, ky, kx)];
          if (wv == 0.0) continue;
          const int dy = ky - pad;
          const int dx = kx - pad;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y) {
            const std::size_t srow = static_cast<std::size_t>(y + dy) * w;
            const std::size_t drow = static_cast<std::size_t>(y) * w;
            for (int x = x0; x < x1; ++x) dst[drow + x] += wv * src[srow + x + dx];
          }
        }
      }
    }
  }
  return out;
}

GridMap batchnorm_infer(const GridMap& input, const BNParams& p) {
  p.validate();
  if (input.channels() != p.channels()) {
    throw InvalidInput("batchnorm_infer: channel count mismatch");
  }
  GridMap out = input;
  for (int c = 0; c < input.channels(); ++c) {
    const double scale = p.gamma[c] / std::sqrt(p.var[c] + p.eps);
    const double mu = p.mean[c];
    const double shift = p.beta[c];
    for (double& v : out.plane(c)) v = (v - mu) * scale + shift;
  }
  return out;
}

GridMap relu(const GridMap& input) {
  GridMap out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

double sigmoid(double x) noexcept {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

GridMap sigmoid(const GridMap& input) {
  GridMap out = input;
  for (double& v : out.values()) v = sigmoid(v);
  return out;
}

AttentionResult scaled_dot_attention(const Matrix& x, double key_dim) {
  if (x.rows < 1 || x.cols < 1) throw InvalidInput("scaled_dot_attention: empty input");
  const int n = x.rows;
  const int d = x.cols;
  const double scale = 1.0 / std::sqrt(key_dim > 0.0 ? key_dim : static_cast<double>(d));

  AttentionResult r{Matrix(n, d), Matrix(n, n)};
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += x(i, c) * x(j, c);
      logits[j] = dot * scale;
      row_max = std::max(row_max, logits[j]);
    }
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      logits[j] = std::exp(logits[j] - row_max);
      total += logits[j];
    }
    for (int j = 0; j < n; ++j) {
      const double wij = logits[j] / total;
      r.weights(i, j) = wij;
      for (int c = 0; c < d; ++c) r.output(i, c) += wij * x(j, c);
    }
  }
  return r;
}

}  // namespace headfuse
