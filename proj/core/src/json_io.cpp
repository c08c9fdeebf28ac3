#include "headfuse/json_io.hpp"

#include <fstream>
#include <sstream>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

double get_number(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

double get_number_or(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? get_number(j, key) : fallback;
}

}  // namespace

nlohmann::json to_json(const Pose2D& p) { return {{"x", p.x}, {"y", p.y}, {"yaw", p.yaw}}; }

nlohmann::json to_json(const BEVGridSpec& g) {
  return {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max},
          {"cell", g.cell}};
}

nlohmann::json to_json(const Box3D& b) {
  return {{"x", b.x}, {"y", b.y}, {"z", b.z},     {"l", b.l},
          {"w", b.w}, {"h", b.h}, {"yaw", b.yaw}, {"score", b.score}};
}

nlohmann::json to_json(const std::vector<Box3D>& boxes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : boxes) arr.push_back(to_json(b));
  return arr;
}

Pose2D pose_from_json(const nlohmann::json& j) {
  return Pose2D::make(get_number(j, "x"), get_number(j, "y"), get_number_or(j, "yaw", 0.0));
}

BEVGridSpec grid_from_json(const nlohmann::json& j) {
  BEVGridSpec g;
  g.x_min = get_number_or(j, "x_min", g.x_min);
  g.x_max = get_number_or(j, "x_max", g.x_max);
  g.y_min = get_number_or(j, "y_min", g.y_min);
  g.y_max = get_number_or(j, "y_max", g.y_max);
  g.cell = get_number_or(j, "cell", g.cell);
  try {
    g.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return g;
}

Box3D box_from_json(const nlohmann::json& j) {
  Box3D b;
  b.x = get_number(j, "x");
  b.y = get_number(j, "y");
  b.z = get_number_or(j, "z", b.z);
  b.l = get_number(j, "l");
  b.w = get_number(j, "w");
  b.h = get_number_or(j, "h", b.h);
  b.yaw = get_number_or(j, "yaw", 0.0);
  b.score = get_number_or(j, "score", 1.0);
  if (!(b.l > 0.0 && b.w > 0.0 && b.h > 0.0)) throw ConfigError("box dimensions must be positive");
  return b;
}

std::vector<Box3D> boxes_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("expected an array of boxes");
  std::vector<Box3D> out;
  out.reserve(j.size());
  for (const auto& item : j) out.push_back(box_from_json(item));
  return out;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace headfuse
