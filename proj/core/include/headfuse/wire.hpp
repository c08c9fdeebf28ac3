#ifndef HEADFUSE_WIRE_HPP_
#define HEADFUSE_WIRE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "headfuse/bytes.hpp"
#include "headfuse/geometry.hpp"
#include "headfuse/heads.hpp"

namespace headfuse {

inline constexpr std::uint16_t kWireVersion = 1;

enum class QuantMode : std::uint8_t { kFloat32 = 0, kUint8 = 1 };
enum class MessageKind : std::uint8_t { kHead = 1, kBox = 2 };

// uint8 mode: value = zero_point[c] + code * scale[c], code in [0, 255].
struct QuantizationSpec {
  QuantMode mode = QuantMode::kFloat32;
  std::vector<double> scale;
  std::vector<double> zero_point;

  static QuantizationSpec float32() { return {}; }
  // Per-channel range of `map` over its valid cells mapped onto [0, 255].
  static QuantizationSpec uint8_fit(const GridMap& map);
  static QuantizationSpec uint8_uniform(int channels, double scale, double zero_point);
  void validate(int channels) const;
  friend bool operator==(const QuantizationSpec&, const QuantizationSpec&) = default;
};

// One quantized C x H x W block. Exactly one of `f32` / `codes` is filled.
struct QuantizedPayload {
  QuantizationSpec spec;
  int channels = 0;
  std::vector<float> f32;
  std::vector<std::uint8_t> codes;

  static QuantizedPayload quantize(const GridMap& map, const QuantizationSpec& spec);
  // Values only; validity is carried separately.
  std::vector<double> dequantize() const;
  friend bool operator==(const QuantizedPayload&, const QuantizedPayload&) = default;
};

struct HeadMessage {
  std::uint32_t sender = 0;
  std::uint64_t frame = 0;
  Pose2D pose;
  BEVGridSpec grid;
  int anchors = 0;
  QuantizedPayload cls;  // A channels
  QuantizedPayload reg;  // 7A channels
  std::vector<std::uint8_t> validity;  // H*W, one byte per cell in memory

  void validate() const;
  HeadMaps maps() const;
  friend bool operator==(const HeadMessage&, const HeadMessage&) = default;
};

HeadMessage make_head_message(std::uint32_t sender, std::uint64_t frame, const Pose2D& pose,
                              const AnchorGrid& anchors, const HeadMaps& maps,
                              QuantMode mode = QuantMode::kFloat32);

struct BoxMessage {
  std::uint32_t sender = 0;
  std::uint64_t frame = 0;
  Pose2D pose;
  std::vector<Box3D> boxes;  // float32-representable fields
  friend bool operator==(const BoxMessage&, const BoxMessage&) = default;
};

// Keeps boxes with score >= threshold, rounding every field to float32.
BoxMessage make_box_message(std::uint32_t sender, std::uint64_t frame, const Pose2D& pose,
                            const std::vector<Box3D>& boxes, double threshold);

// Common header:
//   "HEADMSG1" | u16 version | u8 kind | u32 sender | u64 frame | f64 x, y, yaw
// Head body:
//   f64 x_min, x_max, y_min, y_max, cell | u32 H | u32 W | u32 A
//   | cls payload | reg payload | validity bitmap (ceil(H*W/8) bytes, LSB first)
// Payload: u8 mode | [f64 scale[C] | f64 zero_point[C]] | C*H*W f32 or u8
// Box body: u32 count | count x (f32 x, y, z, l, w, h, yaw, score)
Bytes serialize(const HeadMessage& msg);
Bytes serialize(const BoxMessage& msg);
MessageKind peek_kind(std::span<const std::uint8_t> bytes);
HeadMessage deserialize_head(std::span<const std::uint8_t> bytes);
BoxMessage deserialize_box(std::span<const std::uint8_t> bytes);

inline constexpr std::size_t kBoxRecordBytes = 8 * sizeof(float);

}  // namespace headfuse

#endif  // HEADFUSE_WIRE_HPP_
