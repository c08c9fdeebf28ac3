#ifndef HEADFUSE_CHECKPOINT_HPP_
#define HEADFUSE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>

#include "headfuse/bytes.hpp"
#include "headfuse/fusion.hpp"

namespace headfuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "HEADCKPT" | u32 version | u32 reg_channels | u32 array_count
//   | u64 length[array_count] | f64 bn_a.eps | f64 bn_b.eps
//   | f64 data for each array in ComplementaryParams::for_each_array order
Bytes encode_checkpoint(const ComplementaryParams& params);
ComplementaryParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ComplementaryParams& params, const std::filesystem::path& path);
ComplementaryParams load_checkpoint(const std::filesystem::path& path);

}  // namespace headfuse

#endif  // HEADFUSE_CHECKPOINT_HPP_
