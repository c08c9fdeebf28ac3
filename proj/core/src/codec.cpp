#include "headfuse/codec.hpp"

#include <zlib.h>

#include <limits>
#include <string>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

constexpr std::uint64_t kMaxDecompressed = std::uint64_t{1} << 32;

}  // namespace

Bytes PassThroughCodec::compress(std::span<const std::uint8_t> input) const {
  return Bytes(input.begin(), input.end());
}

Bytes PassThroughCodec::decompress(std::span<const std::uint8_t> input) const {
  return Bytes(input.begin(), input.end());
}

DeflateCodec::DeflateCodec(int level) : level_(level) {
  if (level < 0 || level > 9) throw InvalidInput("DeflateCodec: level must be in [0, 9]");
}

Bytes DeflateCodec::compress(std::span<const std::uint8_t> input) const {
  if (input.size() > std::numeric_limits<uLong>::max()) {
    throw InvalidInput("DeflateCodec: input too large");
  }
  uLongf bound = compressBound(static_cast<uLong>(input.size()));
  ByteWriter w;
  w.put<std::uint64_t>(input.size());
  Bytes out = std::move(w).take();
  const std::size_t header = out.size();
  out.resize(header + bound);
  const int rc = compress2(out.data() + header, &bound, input.data(),
                           static_cast<uLong>(input.size()), level_);
  if (rc != Z_OK) throw std::runtime_error("deflate failed with zlib code " + std::to_string(rc));
  out.resize(header + bound);
  return out;
}

Bytes DeflateCodec::decompress(std::span<const std::uint8_t> input) const {
  ByteReader r(input);
  const auto size = r.get<std::uint64_t>("decompressed length");
  if (size > kMaxDecompressed) {
    throw ParseError("implausible decompressed length " + std::to_string(size), 0);
  }
  Bytes out(static_cast<std::size_t>(size));
  uLongf produced = static_cast<uLongf>(size);
  const auto body = input.subspan(r.offset());
  const int rc = uncompress(out.data(), &produced, body.data(), static_cast<uLong>(body.size()));
  if (rc != Z_OK || produced != size) {
    throw ParseError("corrupt deflate stream (zlib code " + std::to_string(rc) + ")", r.offset());
  }
  return out;
}

std::unique_ptr<Codec> make_codec(std::string_view name) {
  if (name == "none" || name == "passthrough") return std::make_unique<PassThroughCodec>();
  if (name == "deflate" || name == "zlib") return std::make_unique<DeflateCodec>();
  throw ConfigError("unknown codec '" + std::string(name) + "' (expected none or deflate)");
}

}  // namespace headfuse
