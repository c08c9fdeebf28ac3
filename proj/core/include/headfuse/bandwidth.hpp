#ifndef HEADFUSE_BANDWIDTH_HPP_
#define HEADFUSE_BANDWIDTH_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace headfuse {

// Payload-level rate: bytes * 8 * fps / 1e6.
double megabits_per_second(double bytes_per_frame, double fps);

// Dense float map of `channels` x height x width, no header.
double dense_map_bytes(int channels, int height, int width, int bytes_per_value = 4);

struct BandwidthRow {
  std::string strategy;
  int channels = 0;
  double bytes_per_frame = 0.0;
  double compressed_bytes_per_frame = 0.0;
  double mbps = 0.0;
  double compressed_mbps = 0.0;
  double ratio_vs_intermediate = 0.0;
};

struct BandwidthReport {
  double fps = 10.0;
  double intermediate_bytes_per_frame = 0.0;
  std::vector<BandwidthRow> rows;

  // Appends a row from per-frame sizes; compressed sizes default to the raw ones.
  const BandwidthRow& add(const std::string& strategy, int channels,
                          std::span<const std::size_t> bytes_per_frame,
                          std::span<const std::size_t> compressed = {});
  // Appends the hypothetical intermediate-fusion row (`channels` float32 map).
  const BandwidthRow& add_intermediate(int channels, int height, int width);
  const BandwidthRow* find(const std::string& strategy) const;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// fps must be > 0. `intermediate_bytes_per_frame` > 0 enables the ratio column.
BandwidthReport make_report(double fps, double intermediate_bytes_per_frame = 0.0);

// Dataset-shaped grid used to reconstruct published bandwidth figures. The
// dimensions are reverse-engineered from the reported Mbps, not authoritative.
struct GridPreset {
  std::string name;
  int height = 0;
  int width = 0;
  double fps = 10.0;
  int intermediate_channels = 256;
  int head_channels = 16;
  int late_boxes_per_frame = 0;
  std::optional<double> reference_intermediate_mbps;
  std::optional<double> reference_head_mbps;
  std::optional<double> reference_late_mbps;

  void validate() const;
  static GridPreset from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// "v2v4real" (76 x 106) and "opv2v" (96 x 350).
std::vector<GridPreset> builtin_presets();
GridPreset find_preset(const std::string& name);

// Rows: late, head, intermediate. Header bytes are ignored.
BandwidthReport preset_report(const GridPreset& preset);

}  // namespace headfuse

#endif  // HEADFUSE_BANDWIDTH_HPP_
