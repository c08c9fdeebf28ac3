#include "headfuse/wire.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

constexpr std::string_view kMagic = "HEADMSG1";

double round_f32(double v) noexcept { return static_cast<double>(static_cast<float>(v)); }

void put_header(ByteWriter& w, MessageKind kind, std::uint32_t sender, std::uint64_t frame,
                const Pose2D& pose) {
  w.put_magic(kMagic);
  w.put<std::uint16_t>(kWireVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
  w.put<std::uint32_t>(sender);
  w.put<std::uint64_t>(frame);
  w.put<double>(pose.x);
  w.put<double>(pose.y);
  w.put<double>(pose.yaw);
}

struct Header {
  MessageKind kind;
  std::uint32_t sender;
  std::uint64_t frame;
  Pose2D pose;
};

Header get_header(ByteReader& r) {
  r.expect_magic(kMagic);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kWireVersion) {
    throw ParseError("unsupported wire version " + std::to_string(version), version_at);
  }
  const std::size_t kind_at = r.offset();
  const auto kind = r.get<std::uint8_t>("kind");
  if (kind != static_cast<std::uint8_t>(MessageKind::kHead) &&
      kind != static_cast<std::uint8_t>(MessageKind::kBox)) {
    throw ParseError("unknown message kind " + std::to_string(kind), kind_at);
  }
  Header h{static_cast<MessageKind>(kind), 0, 0, {}};
  h.sender = r.get<std::uint32_t>("sender");
  h.frame = r.get<std::uint64_t>("frame");
  h.pose.x = r.get<double>("pose.x");
  h.pose.y = r.get<double>("pose.y");
  h.pose.yaw = r.get<double>("pose.yaw");
  return h;
}

void put_payload(ByteWriter& w, const QuantizedPayload& p) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.spec.mode));
  if (p.spec.mode == QuantMode::kUint8) {
    for (double s : p.spec.scale) w.put<double>(s);
    for (double z : p.spec.zero_point) w.put<double>(z);
    w.put_bytes(p.codes);
  } else {
    for (float v : p.f32) w.put<float>(v);
  }
}

QuantizedPayload get_payload(ByteReader& r, int channels, std::size_t cells) {
  QuantizedPayload p;
  p.channels = channels;
  const std::size_t mode_at = r.offset();
  const auto mode = r.get<std::uint8_t>("quantization mode");
  const std::size_t n = static_cast<std::size_t>(channels) * cells;
  if (mode == static_cast<std::uint8_t>(QuantMode::kFloat32)) {
    p.spec = QuantizationSpec::float32();
    if (r.remaining() / sizeof(float) < n) throw ParseError("truncated float32 payload", r.offset());
    p.f32.resize(n);
    for (float& v : p.f32) v = r.get<float>("float32 value");
  } else if (mode == static_cast<std::uint8_t>(QuantMode::kUint8)) {
    p.spec.mode = QuantMode::kUint8;
    p.spec.scale.resize(channels);
    p.spec.zero_point.resize(channels);
    for (double& s : p.spec.scale) s = r.get<double>("scale");
    for (double& z : p.spec.zero_point) z = r.get<double>("zero point");
    try {
      p.spec.validate(channels);
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), mode_at);
    }
    const auto data = r.get_bytes(n, "uint8 payload");
    p.codes.assign(data.begin(), data.end());
  } else {
    throw ParseError("unknown quantization mode " + std::to_string(mode), mode_at);
  }
  return p;
}

}  // namespace

QuantizationSpec QuantizationSpec::uint8_fit(const GridMap& map) {
  QuantizationSpec q;
  q.mode = QuantMode::kUint8;
  const auto valid = map.validity();
  for (int c = 0; c < map.channels(); ++c) {
    const auto plane = map.plane(c);
    double lo = 0.0;
    double hi = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (!valid[i]) continue;
      lo = any ? std::min(lo, plane[i]) : plane[i];
      hi = any ? std::max(hi, plane[i]) : plane[i];
      any = true;
    }
    const double range = hi - lo;
    q.scale.push_back(range > 0.0 ? range / 255.0 : 1.0);
    q.zero_point.push_back(lo);
  }
  return q;
}

QuantizationSpec QuantizationSpec::uint8_uniform(int channels, double scale, double zero_point) {
  QuantizationSpec q;
  q.mode = QuantMode::kUint8;
  q.scale.assign(static_cast<std::size_t>(channels), scale);
  q.zero_point.assign(static_cast<std::size_t>(channels), zero_point);
  q.validate(channels);
  return q;
}

void QuantizationSpec::validate(int channels) const {
  if (mode == QuantMode::kFloat32) {
    if (!scale.empty() || !zero_point.empty()) {
      throw InvalidInput("QuantizationSpec: float32 mode carries no scale or zero point");
    }
    return;
  }
  if (mode != QuantMode::kUint8) throw InvalidInput("QuantizationSpec: unknown mode");
  if (scale.size() != static_cast<std::size_t>(channels) ||
      zero_point.size() != static_cast<std::size_t>(channels)) {
    throw InvalidInput("QuantizationSpec: need one scale and zero point per channel");
  }
  for (std::size_t c = 0; c < scale.size(); ++c) {
    if (!(scale[c] > 0.0) || !std::isfinite(scale[c]) || !std::isfinite(zero_point[c])) {
      throw InvalidInput("QuantizationSpec: scale must be positive and finite");
    }
  }
}

QuantizedPayload QuantizedPayload::quantize(const GridMap& map, const QuantizationSpec& spec) {
  spec.validate(map.channels());
  QuantizedPayload p;
  p.spec = spec;
  p.channels = map.channels();
  const auto values = map.values();
  if (spec.mode == QuantMode::kFloat32) {
    p.f32.reserve(values.size());
    for (double v : values) p.f32.push_back(static_cast<float>(v));
    return p;
  }
  const std::size_t cells = map.cell_count();
  p.codes.resize(values.size());
  for (int c = 0; c < map.channels(); ++c) {
    const double s = spec.scale[c];
    const double z = spec.zero_point[c];
    for (std::size_t i = 0; i < cells; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * cells + i;
      const double code = std::nearbyint((values[k] - z) / s);
      p.codes[k] = static_cast<std::uint8_t>(std::clamp(code, 0.0, 255.0));
    }
  }
  return p;
}

std::vector<double> QuantizedPayload::dequantize() const {
  if (spec.mode == QuantMode::kFloat32) return std::vector<double>(f32.begin(), f32.end());
  std::vector<double> out(codes.size());
  const std::size_t cells = channels > 0 ? codes.size() / static_cast<std::size_t>(channels) : 0;
  for (std::size_t k = 0; k < codes.size(); ++k) {
    const std::size_t c = k / cells;
    out[k] = spec.zero_point[c] + static_cast<double>(codes[k]) * spec.scale[c];
  }
  return out;
}

void HeadMessage::validate() const {
  grid.validate();
  if (anchors <= 0) throw InvalidInput("HeadMessage: anchor count must be positive");
  const std::size_t cells = static_cast<std::size_t>(grid.height()) * grid.width();
  if (validity.size() != cells) throw InvalidInput("HeadMessage: validity size does not match grid");
  auto check = [cells](const QuantizedPayload& p, int channels, const char* what) {
    if (p.channels != channels) {
      throw InvalidInput(std::string("HeadMessage: ") + what + " channel count inconsistent with A");
    }
    p.spec.validate(channels);
    const std::size_t n = static_cast<std::size_t>(channels) * cells;
    const std::size_t got = p.spec.mode == QuantMode::kFloat32 ? p.f32.size() : p.codes.size();
    const std::size_t other = p.spec.mode == QuantMode::kFloat32 ? p.codes.size() : p.f32.size();
    if (got != n || other != 0) {
      throw InvalidInput(std::string("HeadMessage: ") + what + " payload length does not match grid");
    }
  };
  check(cls, anchors, "classification");
  check(reg, kBoxParams * anchors, "regression");
}

HeadMaps HeadMessage::maps() const {
  validate();
  const int h = grid.height();
  const int w = grid.width();
  return {GridMap::from_values(cls.channels, h, w, cls.dequantize(), validity),
          GridMap::from_values(reg.channels, h, w, reg.dequantize(), validity)};
}

HeadMessage make_head_message(std::uint32_t sender, std::uint64_t frame, const Pose2D& pose,
                              const AnchorGrid& anchors, const HeadMaps& maps, QuantMode mode) {
  anchors.validate();
  const int h = anchors.grid.height();
  const int w = anchors.grid.width();
  if (maps.cls.channels() != anchors.cls_channels() ||
      maps.reg.channels() != anchors.reg_channels() || maps.cls.height() != h ||
      maps.cls.width() != w || !maps.cls.same_extent(maps.reg)) {
    throw InvalidInput("make_head_message: maps do not match the anchor grid");
  }
  HeadMessage m;
  m.sender = sender;
  m.frame = frame;
  m.pose = pose;
  m.grid = anchors.grid;
  m.anchors = anchors.anchors_per_cell();
  const auto spec_for = [mode](const GridMap& g) {
    return mode == QuantMode::kUint8 ? QuantizationSpec::uint8_fit(g) : QuantizationSpec::float32();
  };
  m.cls = QuantizedPayload::quantize(maps.cls, spec_for(maps.cls));
  m.reg = QuantizedPayload::quantize(maps.reg, spec_for(maps.reg));
  m.validity = mask_and(maps.cls.validity(), maps.reg.validity());
  return m;
}

BoxMessage make_box_message(std::uint32_t sender, std::uint64_t frame, const Pose2D& pose,
                            const std::vector<Box3D>& boxes, double threshold) {
  BoxMessage m{sender, frame, pose, {}};
  for (const Box3D& b : boxes) {
    if (!(b.score >= threshold)) continue;
    Box3D r{round_f32(b.x), round_f32(b.y), round_f32(b.z), round_f32(b.l),
            round_f32(b.w), round_f32(b.h), round_f32(b.yaw), round_f32(b.score)};
    // Rounding may push a score just under the threshold.
    if (r.score < threshold) r.score = std::nextafter(static_cast<float>(r.score), 2.0f);
    m.boxes.push_back(r);
  }
  return m;
}

Bytes serialize(const HeadMessage& msg) {
  msg.validate();
  ByteWriter w;
  put_header(w, MessageKind::kHead, msg.sender, msg.frame, msg.pose);
  w.put<double>(msg.grid.x_min);
  w.put<double>(msg.grid.x_max);
  w.put<double>(msg.grid.y_min);
  w.put<double>(msg.grid.y_max);
  w.put<double>(msg.grid.cell);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.grid.height()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.grid.width()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.anchors));
  put_payload(w, msg.cls);
  put_payload(w, msg.reg);
  Bytes bitmap((msg.validity.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < msg.validity.size(); ++i) {
    if (msg.validity[i]) bitmap[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  w.put_bytes(bitmap);
  return std::move(w).take();
}

Bytes serialize(const BoxMessage& msg) {
  ByteWriter w;
  put_header(w, MessageKind::kBox, msg.sender, msg.frame, msg.pose);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.boxes.size()));
  for (const Box3D& b : msg.boxes) {
    for (double v : {b.x, b.y, b.z, b.l, b.w, b.h, b.yaw, b.score}) w.put<float>(static_cast<float>(v));
  }
  return std::move(w).take();
}

MessageKind peek_kind(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  return get_header(r).kind;
}

HeadMessage deserialize_head(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const Header h = get_header(r);
  if (h.kind != MessageKind::kHead) throw ParseError("expected a head message", kMagic.size() + 2);
  HeadMessage m;
  m.sender = h.sender;
  m.frame = h.frame;
  m.pose = h.pose;
  const std::size_t grid_at = r.offset();
  m.grid.x_min = r.get<double>("grid.x_min");
  m.grid.x_max = r.get<double>("grid.x_max");
  m.grid.y_min = r.get<double>("grid.y_min");
  m.grid.y_max = r.get<double>("grid.y_max");
  m.grid.cell = r.get<double>("grid.cell");
  const auto height = r.get<std::uint32_t>("grid height");
  const auto width = r.get<std::uint32_t>("grid width");
  const std::size_t anchors_at = r.offset();
  const auto anchors = r.get<std::uint32_t>("anchor count");
  try {
    m.grid.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), grid_at);
  }
  if (static_cast<int>(height) != m.grid.height() || static_cast<int>(width) != m.grid.width()) {
    throw ParseError("grid dimensions disagree with grid extent", grid_at);
  }
  if (anchors == 0 || anchors > 1024) {
    throw ParseError("implausible anchor count " + std::to_string(anchors), anchors_at);
  }
  m.anchors = static_cast<int>(anchors);
  const std::size_t cells = static_cast<std::size_t>(height) * width;
  m.cls = get_payload(r, m.anchors, cells);
  m.reg = get_payload(r, kBoxParams * m.anchors, cells);
  const auto bitmap = r.get_bytes((cells + 7) / 8, "validity bitmap");
  m.validity.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) m.validity[i] = (bitmap[i / 8] >> (i % 8)) & 1u;
  r.expect_end();
  return m;
}

BoxMessage deserialize_box(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const Header h = get_header(r);
  if (h.kind != MessageKind::kBox) throw ParseError("expected a box message", kMagic.size() + 2);
  BoxMessage m{h.sender, h.frame, h.pose, {}};
  const std::size_t count_at = r.offset();
  const auto count = r.get<std::uint32_t>("box count");
  if (r.remaining() / kBoxRecordBytes < count) {
    throw ParseError("box count " + std::to_string(count) + " exceeds message length", count_at);
  }
  m.boxes.resize(count);
  for (Box3D& b : m.boxes) {
    for (double* v : {&b.x, &b.y, &b.z, &b.l, &b.w, &b.h, &b.yaw, &b.score}) {
      *v = r.get<float>("box field");
    }
  }
  r.expect_end();
  return m;
}

}  // namespace headfuse
