#ifndef HEADFUSE_CODEC_HPP_
#define HEADFUSE_CODEC_HPP_

#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "headfuse/bytes.hpp"

namespace headfuse {

// Lossless byte-stream codec. Implementations are stateless.
class Codec {
 public:
  virtual ~Codec() = default;
  virtual std::string name() const = 0;
  virtual Bytes compress(std::span<const std::uint8_t> input) const = 0;
  // Throws ParseError on a corrupt stream.
  virtual Bytes decompress(std::span<const std::uint8_t> input) const = 0;
};

class PassThroughCodec final : public Codec {
 public:
  std::string name() const override { return "none"; }
  Bytes compress(std::span<const std::uint8_t> input) const override;
  Bytes decompress(std::span<const std::uint8_t> input) const override;
};

// zlib deflate stream prefixed with the u64 decompressed length.
class DeflateCodec final : public Codec {
 public:
  explicit DeflateCodec(int level = 6);
  std::string name() const override { return "deflate"; }
  Bytes compress(std::span<const std::uint8_t> input) const override;
  Bytes decompress(std::span<const std::uint8_t> input) const override;

 private:
  int level_;
};

// "none" or "deflate"; anything else is a ConfigError.
std::unique_ptr<Codec> make_codec(std::string_view name);

}  // namespace headfuse

#endif  // HEADFUSE_CODEC_HPP_
