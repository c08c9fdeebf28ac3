#ifndef HEADFUSE_TAPE_HPP_
#define HEADFUSE_TAPE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "headfuse/grid.hpp"

namespace headfuse {

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
};

// Reverse-mode recorder over the grid ops. Forward values are computed
// eagerly with the same kernels as the free functions in grid.hpp.
//
// Parameters are referenced by address: every ConvParams/BNParams passed
// to an op must outlive the tape. Gradients for them are accumulated per
// address by backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var input(GridMap value);

  Var conv2d(Var x, const ConvParams& p);
  Var batchnorm(Var x, const BNParams& p);
  Var relu(Var x);
  Var sigmoid(Var x);

  Var add(Var a, Var b);
  // `a` has C channels, `weight` has one; weight is broadcast across channels.
  Var scale(Var a, Var weight);
  Var one_minus(Var a);
  Var concat(Var a, Var b);

  // Single-channel min-max normalization over the cells where `mask` is set;
  // cells outside the mask become 0. If max == min the masked cells are 0.5.
  Var minmax_normalize(Var x, std::span<const std::uint8_t> mask);
  // Clamps masked cells of a single-channel map to [0, 1]; others become 0.
  Var clamp_unit(Var x, std::span<const std::uint8_t> mask);
  // Per-cell choice (mask over H*W): where_true inside, where_false outside.
  Var select(std::span<const std::uint8_t> mask, Var where_true, Var where_false);

  Var sum(Var x);
  // Mean smooth-L1 over the elements with `element_mask` set (size C*H*W).
  // Returns 0 when no element is selected.
  Var smooth_l1(Var pred, const GridMap& target, std::span<const std::uint8_t> element_mask,
                double beta = 1.0);

  const GridMap& value(Var v) const;
  // Gradient of the last backward() loss with respect to `v`.
  const GridMap& grad(Var v) const;

  // `loss` must be a 1x1x1 value recorded on this tape.
  void backward(Var loss);

  ConvParams grad(const ConvParams& p) const;
  BNParams grad(const BNParams& p) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    GridMap value;
    GridMap grad;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(GridMap value, std::function<void(Tape&, std::size_t)> backward);
  const Node& node(Var v) const;
  GridMap& grad_ref(std::size_t id) { return nodes_[id].grad; }

  ConvParams& conv_grad_slot(const ConvParams* p);
  BNParams& bn_grad_slot(const BNParams* p);

  std::vector<Node> nodes_;
  std::map<const ConvParams*, ConvParams> conv_grads_;
  std::map<const BNParams*, BNParams> bn_grads_;
  bool has_backward_ = false;
};

}  // namespace headfuse

#endif  // HEADFUSE_TAPE_HPP_
