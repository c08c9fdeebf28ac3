#ifndef HEADFUSE_JSON_IO_HPP_
#define HEADFUSE_JSON_IO_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headfuse/geometry.hpp"

namespace headfuse {

nlohmann::json to_json(const Pose2D& p);
nlohmann::json to_json(const BEVGridSpec& g);
nlohmann::json to_json(const Box3D& b);
nlohmann::json to_json(const std::vector<Box3D>& boxes);

// Missing or mistyped fields raise ConfigError naming the field.
Pose2D pose_from_json(const nlohmann::json& j);
BEVGridSpec grid_from_json(const nlohmann::json& j);
Box3D box_from_json(const nlohmann::json& j);
std::vector<Box3D> boxes_from_json(const nlohmann::json& j);

// Whole-file helpers. Reading a missing or malformed file is a ConfigError.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace headfuse

#endif  // HEADFUSE_JSON_IO_HPP_
