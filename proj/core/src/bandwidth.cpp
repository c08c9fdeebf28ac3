#include "headfuse/bandwidth.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "headfuse/errors.hpp"
#include "headfuse/wire.hpp"

namespace headfuse {

namespace {

double mean_of(std::span<const std::size_t> v) {
  if (v.empty()) return 0.0;
  const double total = std::accumulate(v.begin(), v.end(), 0.0,
                                       [](double a, std::size_t b) { return a + static_cast<double>(b); });
  return total / static_cast<double>(v.size());
}

}  // namespace

double megabits_per_second(double bytes_per_frame, double fps) {
  if (!(fps > 0.0)) throw InvalidInput("bandwidth: fps must be positive");
  return bytes_per_frame * 8.0 * fps / 1e6;
}

double dense_map_bytes(int channels, int height, int width, int bytes_per_value) {
  if (channels < 0 || height < 0 || width < 0 || bytes_per_value <= 0) {
    throw InvalidInput("dense_map_bytes: negative dimension");
  }
  return static_cast<double>(channels) * height * width * bytes_per_value;
}

BandwidthReport make_report(double fps, double intermediate_bytes_per_frame) {
  if (!(fps > 0.0)) throw InvalidInput("bandwidth: fps must be positive");
  BandwidthReport r;
  r.fps = fps;
  r.intermediate_bytes_per_frame = intermediate_bytes_per_frame;
  return r;
}

const BandwidthRow& BandwidthReport::add(const std::string& strategy, int channels,
                                         std::span<const std::size_t> bytes_per_frame,
                                         std::span<const std::size_t> compressed) {
  BandwidthRow row;
  row.strategy = strategy;
  row.channels = channels;
  row.bytes_per_frame = mean_of(bytes_per_frame);
  row.compressed_bytes_per_frame = compressed.empty() ? row.bytes_per_frame : mean_of(compressed);
  row.mbps = megabits_per_second(row.bytes_per_frame, fps);
  row.compressed_mbps = megabits_per_second(row.compressed_bytes_per_frame, fps);
  row.ratio_vs_intermediate =
      intermediate_bytes_per_frame > 0.0 ? row.bytes_per_frame / intermediate_bytes_per_frame : 0.0;
  rows.push_back(row);
  return rows.back();
}

const BandwidthRow& BandwidthReport::add_intermediate(int channels, int height, int width) {
  const double bytes = dense_map_bytes(channels, height, width);
  if (intermediate_bytes_per_frame <= 0.0) intermediate_bytes_per_frame = bytes;
  BandwidthRow row;
  row.strategy = "intermediate";
  row.channels = channels;
  row.bytes_per_frame = bytes;
  row.compressed_bytes_per_frame = bytes;
  row.mbps = megabits_per_second(bytes, fps);
  row.compressed_mbps = row.mbps;
  row.ratio_vs_intermediate = bytes / intermediate_bytes_per_frame;
  rows.push_back(row);
  return rows.back();
}

const BandwidthRow* BandwidthReport::find(const std::string& strategy) const {
  for (const auto& row : rows) {
    if (row.strategy == strategy) return &row;
  }
  return nullptr;
}

std::string BandwidthReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "strategy,channels,bytes_per_frame,mbps,ratio_vs_intermediate\n";
  for (const auto& r : rows) {
    os << r.strategy << ',' << r.channels << ',' << r.bytes_per_frame << ',' << r.mbps << ','
       << r.ratio_vs_intermediate << '\n';
  }
  return os.str();
}

nlohmann::json BandwidthReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"strategy", r.strategy},
                         {"channels", r.channels},
                         {"bytes_per_frame", r.bytes_per_frame},
                         {"compressed_bytes_per_frame", r.compressed_bytes_per_frame},
                         {"mbps", r.mbps},
                         {"compressed_mbps", r.compressed_mbps},
                         {"ratio_vs_intermediate", r.ratio_vs_intermediate}});
  }
  return {{"fps", fps},
          {"intermediate_bytes_per_frame", intermediate_bytes_per_frame},
          {"rows", rows_json}};
}

void GridPreset::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("preset '" + name + "': grid must be non-empty");
  if (!(fps > 0.0)) throw ConfigError("preset '" + name + "': fps must be positive");
  if (intermediate_channels <= 0 || head_channels <= 0 || late_boxes_per_frame < 0) {
    throw ConfigError("preset '" + name + "': channel and box counts must be positive");
  }
}

GridPreset GridPreset::from_json(const nlohmann::json& j) {
  try {
    GridPreset p;
    p.name = j.value("name", std::string("custom"));
    p.height = j.at("height").get<int>();
    p.width = j.at("width").get<int>();
    p.fps = j.value("fps", 10.0);
    p.intermediate_channels = j.value("intermediate_channels", 256);
    p.head_channels = j.value("head_channels", 16);
    p.late_boxes_per_frame = j.value("late_boxes_per_frame", 0);
    if (j.contains("reference_intermediate_mbps")) {
      p.reference_intermediate_mbps = j.at("reference_intermediate_mbps").get<double>();
    }
    if (j.contains("reference_head_mbps")) p.reference_head_mbps = j.at("reference_head_mbps").get<double>();
    if (j.contains("reference_late_mbps")) p.reference_late_mbps = j.at("reference_late_mbps").get<double>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad grid preset: ") + e.what());
  }
}

nlohmann::json GridPreset::to_json() const {
  nlohmann::json j{{"name", name},
                   {"height", height},
                   {"width", width},
                   {"fps", fps},
                   {"intermediate_channels", intermediate_channels},
                   {"head_channels", head_channels},
                   {"late_boxes_per_frame", late_boxes_per_frame}};
  if (reference_intermediate_mbps) j["reference_intermediate_mbps"] = *reference_intermediate_mbps;
  if (reference_head_mbps) j["reference_head_mbps"] = *reference_head_mbps;
  if (reference_late_mbps) j["reference_late_mbps"] = *reference_late_mbps;
  return j;
}

std::vector<GridPreset> builtin_presets() {
  GridPreset v2v{"v2v4real", 76, 106, 10.0, 256, 16, 35, 660.0, 41.6, 0.09};
  GridPreset opv{"opv2v", 96, 350, 10.0, 256, 16, 145, 2749.6, 172.0, 0.37};
  return {v2v, opv};
}

GridPreset find_preset(const std::string& name) {
  for (auto& p : builtin_presets()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown grid preset '" + name + "' (expected v2v4real or opv2v)");
}

BandwidthReport preset_report(const GridPreset& preset) {
  preset.validate();
  BandwidthReport r = make_report(
      preset.fps, dense_map_bytes(preset.intermediate_channels, preset.height, preset.width));
  const std::size_t late = static_cast<std::size_t>(preset.late_boxes_per_frame) * kBoxRecordBytes;
  const std::size_t head =
      static_cast<std::size_t>(dense_map_bytes(preset.head_channels, preset.height, preset.width));
  r.add("late", 8, std::span<const std::size_t>(&late, 1));
  r.add("head", preset.head_channels, std::span<const std::size_t>(&head, 1));
  r.add_intermediate(preset.intermediate_channels, preset.height, preset.width);
  return r;
}

}  // namespace headfuse
