#ifndef HEADFUSE_GRID_HPP_
#define HEADFUSE_GRID_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace headfuse {

// Dense C x H x W map of doubles stored channel-major, with an H x W
// validity mask. A cell is valid when it carries sensor-derived data;
// warping marks out-of-range cells invalid.
class GridMap {
 public:
  GridMap() = default;
  GridMap(int channels, int height, int width, double fill = 0.0);

  // Takes ownership of `values` (size C*H*W). An empty `validity` means all valid.
  static GridMap from_values(int channels, int height, int width, std::vector<double> values,
                             std::vector<std::uint8_t> validity = {});

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }
  double& at(int c, int y, int x) noexcept { return values_[index(c, y, x)]; }
  double at(int c, int y, int x) const noexcept { return values_[index(c, y, x)]; }

  bool valid(int y, int x) const noexcept {
    return validity_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set_valid(int y, int x, bool v) noexcept {
    validity_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<std::uint8_t> validity() noexcept { return validity_; }
  std::span<const std::uint8_t> validity() const noexcept { return validity_; }

  // Channel plane view (H*W contiguous values).
  std::span<double> plane(int c) noexcept {
    return std::span<double>(values_).subspan(static_cast<std::size_t>(c) * cell_count(), cell_count());
  }
  std::span<const double> plane(int c) const noexcept {
    return std::span<const double>(values_).subspan(static_cast<std::size_t>(c) * cell_count(),
                                                    cell_count());
  }

  bool same_shape(const GridMap& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool same_extent(const GridMap& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Copy of channels [first, first + count), validity shared.
  GridMap channel_slice(int first, int count) const;

  bool all_finite() const noexcept;

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> validity_;
};

// Channel-wise concatenation; validity taken from `a`.
GridMap concat_channels(const GridMap& a, const GridMap& b);

// Logical AND / OR of two validity masks of equal extent.
std::vector<std::uint8_t> mask_and(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
std::vector<std::uint8_t> mask_or(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct ConvParams {
  int kernel = 1;  // 1 or 3
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;  // [out][in][ky][kx]
  std::vector<double> bias;    // [out]

  ConvParams() = default;
  ConvParams(int kernel_size, int in, int out);

  std::size_t weight_index(int o, int i, int ky, int kx) const noexcept {
    return ((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx;
  }
  // Throws InvalidInput when sizes disagree with the declared shape.
  void validate() const;

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct BNParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;

  BNParams() = default;
  // gamma = 1, beta = 0, mean = 0, var = 1.
  explicit BNParams(int channels, double epsilon = 1e-5);

  int channels() const noexcept { return static_cast<int>(gamma.size()); }
  void validate() const;

  friend bool operator==(const BNParams&, const BNParams&) = default;
};

// Same-padded (zero fill) cross-correlation. Validity passes through.
GridMap conv2d(const GridMap& input, const ConvParams& p);

// Inference-form batch norm: (x - mean) / sqrt(var + eps) * gamma + beta.
GridMap batchnorm_infer(const GridMap& input, const BNParams& p);

GridMap relu(const GridMap& input);
GridMap sigmoid(const GridMap& input);
double sigmoid(double x) noexcept;

// Row-major dense matrix, used for per-cell attention.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) noexcept { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const noexcept {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct AttentionResult {
  Matrix output;   // N x d
  Matrix weights;  // N x N, row-stochastic
};

// softmax(X X^T / sqrt(d_k)) X with Q = K = V = X. `key_dim` <= 0 means
// d_k = X.cols. Softmax subtracts the row maximum before exponentiation.
AttentionResult scaled_dot_attention(const Matrix& x, double key_dim = 0.0);

}  // namespace headfuse

#endif  // HEADFUSE_GRID_HPP_
