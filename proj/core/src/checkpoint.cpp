#include "headfuse/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

constexpr std::string_view kMagic = "HEADCKPT";

}  // namespace

Bytes encode_checkpoint(const ComplementaryParams& params) {
  params.validate();
  std::vector<std::uint64_t> lengths;
  params.for_each_array([&lengths](std::span<const double> s) { lengths.push_back(s.size()); });

  ByteWriter w;
  w.put_magic(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.reg_channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lengths.size()));
  for (auto n : lengths) w.put<std::uint64_t>(n);
  w.put<double>(params.bn_a.eps);
  w.put<double>(params.bn_b.eps);
  params.for_each_array([&w](std::span<const double> s) {
    for (double v : s) w.put<double>(v);
  });
  return std::move(w).take();
}

ComplementaryParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::size_t channels_at = r.offset();
  const auto channels = r.get<std::uint32_t>("reg_channels");
  if (channels == 0 || channels > 4096) {
    throw ParseError("implausible regression channel count " + std::to_string(channels),
                     channels_at);
  }
  ComplementaryParams params = ComplementaryParams::initialize(static_cast<int>(channels), 0);

  std::vector<std::uint64_t> expected;
  params.for_each_array([&expected](std::span<const double> s) { expected.push_back(s.size()); });
  const std::size_t count_at = r.offset();
  const auto count = r.get<std::uint32_t>("array_count");
  if (count != expected.size()) {
    throw ParseError("checkpoint has " + std::to_string(count) + " arrays, expected " +
                         std::to_string(expected.size()),
                     count_at);
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const std::size_t at = r.offset();
    const auto n = r.get<std::uint64_t>("array length");
    if (n != expected[i]) {
      throw ParseError("array " + std::to_string(i) + " has length " + std::to_string(n) +
                           ", expected " + std::to_string(expected[i]),
                       at);
    }
  }
  params.bn_a.eps = r.get<double>("bn_a.eps");
  params.bn_b.eps = r.get<double>("bn_b.eps");
  params.for_each_array([&r](std::span<double> s) {
    for (double& v : s) v = r.get<double>("parameter value");
  });
  r.expect_end();
  try {
    params.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("checkpoint parameters invalid: ") + e.what(), r.offset());
  }
  return params;
}

void save_checkpoint(const ComplementaryParams& params, const std::filesystem::path& path) {
  const Bytes bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint: " + path.string());
}

ComplementaryParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace headfuse
