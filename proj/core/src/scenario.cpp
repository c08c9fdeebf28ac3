#include "headfuse/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "headfuse/errors.hpp"
#include "headfuse/json_io.hpp"
#include "headfuse/random.hpp"

namespace headfuse {

namespace {

Box3D inflate(const Box3D& b, double margin) {
  Box3D out = b;
  out.l += 2.0 * margin;
  out.w += 2.0 * margin;
  return out;
}

bool footprints_overlap(const Box3D& a, const Box3D& b) {
  const double reach = 0.5 * (std::hypot(a.l, a.w) + std::hypot(b.l, b.w));
  if (std::hypot(a.x - b.x, a.y - b.y) >= reach) return false;
  const auto ca = a.corners();
  const auto cb = b.corners();
  return convex_intersection_area(ca, cb) > 0.0;
}

template <typename T>
T json_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

void BackboneProfile::validate() const {
  const std::string who = "profile '" + name + "': ";
  if (!(score_sigma >= 0.0) || !(reg_sigma >= 0.0) || !(interior_noise_gain >= 0.0)) {
    throw InvalidInput(who + "noise parameters must be >= 0");
  }
  if (blur_radius < 0 || !(blur_decay >= 0.0 && blur_decay <= 1.0)) {
    throw InvalidInput(who + "blur radius must be >= 0 and decay in [0, 1]");
  }
  if (!(ghost_rate >= 0.0) || !(ghost_score_max >= 0.0 && ghost_score_max <= 1.0)) {
    throw InvalidInput(who + "ghost rate must be >= 0 and ghost score in [0, 1]");
  }
  if (calibration.size() < 2 || calibration.front().first != 0.0 || calibration.back().first != 1.0) {
    throw InvalidInput(who + "calibration must have knots at x = 0 and x = 1");
  }
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    const auto [x, y] = calibration[i];
    if (!(y >= 0.0 && y <= 1.0)) throw InvalidInput(who + "calibration values must lie in [0, 1]");
    if (i > 0 && !(x > calibration[i - 1].first && y >= calibration[i - 1].second)) {
      throw InvalidInput(who + "calibration must be strictly increasing in x and monotone in y");
    }
  }
}

double BackboneProfile::calibrate(double x) const {
  x = std::clamp(x, 0.0, 1.0);
  for (std::size_t i = 1; i < calibration.size(); ++i) {
    const auto [x1, y1] = calibration[i];
    if (x <= x1) {
      const auto [x0, y0] = calibration[i - 1];
      return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    }
  }
  return calibration.back().second;
}

double BackboneProfile::range_factor(double distance) const noexcept {
  if (!(falloff_end > falloff_start)) return 1.0;
  if (distance <= falloff_start) return 1.0;
  if (distance >= falloff_end) return 0.0;
  return (falloff_end - distance) / (falloff_end - falloff_start);
}

nlohmann::json BackboneProfile::to_json() const {
  nlohmann::json knots = nlohmann::json::array();
  for (const auto& [x, y] : calibration) knots.push_back({x, y});
  return {{"name", name},
          {"score_sigma", score_sigma},
          {"reg_sigma", reg_sigma},
          {"blur_radius", blur_radius},
          {"blur_decay", blur_decay},
          {"calibration", knots},
          {"falloff_start", falloff_start},
          {"falloff_end", falloff_end},
          {"interior_noise_gain", interior_noise_gain},
          {"ghost_rate", ghost_rate},
          {"ghost_score_max", ghost_score_max}};
}

BackboneProfile BackboneProfile::from_json(const nlohmann::json& j) {
  if (j.is_string()) return named_profile(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("profile must be a name or an object");
  BackboneProfile p = j.contains("base") ? named_profile(j.at("base").get<std::string>())
                                         : BackboneProfile{};
  p.name = json_or(j, "name", p.name);
  p.score_sigma = json_or(j, "score_sigma", p.score_sigma);
  p.reg_sigma = json_or(j, "reg_sigma", p.reg_sigma);
  p.blur_radius = json_or(j, "blur_radius", p.blur_radius);
  p.blur_decay = json_or(j, "blur_decay", p.blur_decay);
  if (j.contains("calibration")) {
    p.calibration.clear();
    for (const auto& knot : j.at("calibration")) {
      if (!knot.is_array() || knot.size() != 2) throw ConfigError("calibration knots must be [x, y]");
      p.calibration.emplace_back(knot[0].get<double>(), knot[1].get<double>());
    }
  }
  p.falloff_start = json_or(j, "falloff_start", p.falloff_start);
  p.falloff_end = json_or(j, "falloff_end", p.falloff_end);
  p.interior_noise_gain = json_or(j, "interior_noise_gain", p.interior_noise_gain);
  p.ghost_rate = json_or(j, "ghost_rate", p.ghost_rate);
  p.ghost_score_max = json_or(j, "ghost_score_max", p.ghost_score_max);
  try {
    p.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return p;
}

BackboneProfile named_profile(const std::string& name) {
  BackboneProfile p;
  p.name = name;
  if (name == "ideal") return p;
  if (name == "pillars") {
    p.score_sigma = 0.05;
    p.reg_sigma = 0.08;
    p.blur_radius = 1;
    p.falloff_start = 35.0;
    p.falloff_end = 60.0;
    p.interior_noise_gain = 0.5;
    p.ghost_rate = 1.0;
    p.ghost_score_max = 0.6;
    return p;
  }
  if (name == "second") {
    p.score_sigma = 0.06;
    p.reg_sigma = 0.1;
    p.blur_radius = 1;
    p.calibration = {{0.0, 0.0}, {0.5, 0.4}, {1.0, 0.9}};
    p.falloff_start = 30.0;
    p.falloff_end = 55.0;
    p.interior_noise_gain = 0.5;
    p.ghost_rate = 1.5;
    p.ghost_score_max = 0.65;
    return p;
  }
  throw ConfigError("unknown backbone profile '" + name + "' (expected ideal, pillars or second)");
}

void VisibilityModel::validate() const {
  if (ray_count < 1) throw InvalidInput("VisibilityModel: ray_count must be >= 1");
}

void ScenarioConfig::validate() const {
  if (agent_count < 1) throw InvalidInput("ScenarioConfig: at least one agent required");
  if (profiles.empty()) throw InvalidInput("ScenarioConfig: at least one profile required");
  if (object_count < 0 || occluder_count < 0) throw InvalidInput("ScenarioConfig: negative counts");
  if (frames < 1) throw InvalidInput("ScenarioConfig: frames must be >= 1");
  if (!(object_extent > 0.0)) throw InvalidInput("ScenarioConfig: object_extent must be positive");
  if (!(sender_min_distance >= 0.0 && sender_max_distance >= sender_min_distance)) {
    throw InvalidInput("ScenarioConfig: sender distance range is empty");
  }
  if (!(agent_yaw_sigma >= 0.0) || !(heading_sigma >= 0.0)) {
    throw InvalidInput("ScenarioConfig: yaw sigmas must be >= 0");
  }
  if (heading_mode != "axis" && heading_mode != "uniform") {
    throw InvalidInput("ScenarioConfig: heading_mode must be axis or uniform");
  }
  if (!(comm_range >= 0.0)) throw InvalidInput("ScenarioConfig: comm_range must be >= 0");
  if (max_retries < 1) throw InvalidInput("ScenarioConfig: max_retries must be >= 1");
  grid.validate();
  visibility.validate();
  for (const auto& name : profiles) named_profile(name).validate();
}

nlohmann::json ScenarioConfig::to_json() const {
  return {{"agent_count", agent_count},
          {"profiles", profiles},
          {"object_count", object_count},
          {"occluder_count", occluder_count},
          {"frames", frames},
          {"object_extent", object_extent},
          {"sender_min_distance", sender_min_distance},
          {"sender_max_distance", sender_max_distance},
          {"agent_yaw_sigma", agent_yaw_sigma},
          {"heading_mode", heading_mode},
          {"heading_sigma", heading_sigma},
          {"comm_range", comm_range},
          {"grid", headfuse::to_json(grid)},
          {"ray_count", visibility.ray_count},
          {"max_retries", max_retries}};
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
  ScenarioConfig c;
  c.agent_count = json_or(j, "agent_count", c.agent_count);
  c.profiles = json_or(j, "profiles", c.profiles);
  c.object_count = json_or(j, "object_count", c.object_count);
  c.occluder_count = json_or(j, "occluder_count", c.occluder_count);
  c.frames = json_or(j, "frames", c.frames);
  c.object_extent = json_or(j, "object_extent", c.object_extent);
  c.sender_min_distance = json_or(j, "sender_min_distance", c.sender_min_distance);
  c.sender_max_distance = json_or(j, "sender_max_distance", c.sender_max_distance);
  c.agent_yaw_sigma = json_or(j, "agent_yaw_sigma", c.agent_yaw_sigma);
  c.heading_mode = json_or(j, "heading_mode", c.heading_mode);
  c.heading_sigma = json_or(j, "heading_sigma", c.heading_sigma);
  c.comm_range = json_or(j, "comm_range", c.comm_range);
  if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
  c.visibility.ray_count = json_or(j, "ray_count", c.visibility.ray_count);
  c.max_retries = json_or(j, "max_retries", c.max_retries);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void Scenario::validate() const {
  if (agents.empty()) throw InvalidInput("Scenario: at least one agent required");
  if (frames < 1) throw InvalidInput("Scenario: frames must be >= 1");
  grid.validate();
  visibility.validate();
  for (const auto& a : agents) a.profile.validate();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t k = i + 1; k < agents.size(); ++k) {
      if (agents[i].id == agents[k].id) throw InvalidInput("Scenario: duplicate agent id");
    }
  }
}

const Agent& Scenario::agent(std::uint32_t id) const {
  for (const auto& a : agents) {
    if (a.id == id) return a;
  }
  throw InvalidInput("Scenario: no agent with id " + std::to_string(id));
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json agents_json = nlohmann::json::array();
  for (const auto& a : agents) {
    agents_json.push_back({{"id", a.id}, {"pose", headfuse::to_json(a.pose)}, {"profile", a.profile.to_json()}});
  }
  return {{"seed", seed},
          {"frames", frames},
          {"grid", headfuse::to_json(grid)},
          {"ray_count", visibility.ray_count},
          {"comm_range", comm_range},
          {"agents", agents_json},
          {"objects", headfuse::to_json(objects)},
          {"occluders", headfuse::to_json(occluders)}};
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  Scenario s;
  s.seed = json_or<std::uint64_t>(j, "seed", 0);
  s.frames = json_or(j, "frames", 1);
  if (j.contains("grid")) s.grid = grid_from_json(j.at("grid"));
  s.visibility.ray_count = json_or(j, "ray_count", s.visibility.ray_count);
  s.comm_range = json_or(j, "comm_range", s.comm_range);
  if (!j.contains("agents") || !j.at("agents").is_array()) {
    throw ConfigError("scenario needs an 'agents' array");
  }
  std::uint32_t next_id = 0;
  for (const auto& a : j.at("agents")) {
    Agent agent;
    agent.id = json_or(a, "id", next_id);
    next_id = agent.id + 1;
    if (!a.contains("pose")) throw ConfigError("agent is missing 'pose'");
    agent.pose = pose_from_json(a.at("pose"));
    agent.profile = a.contains("profile") ? BackboneProfile::from_json(a.at("profile"))
                                          : named_profile("ideal");
    s.agents.push_back(std::move(agent));
  }
  if (j.contains("objects")) s.objects = boxes_from_json(j.at("objects"));
  if (j.contains("occluders")) s.occluders = boxes_from_json(j.at("occluders"));
  try {
    s.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return s;
}

Scenario generate_scenario(std::uint64_t seed, const ScenarioConfig& config) {
  config.validate();
  Rng rng(hash_keys({seed, 0x5CE7A410ULL}));
  Scenario s;
  s.seed = seed;
  s.frames = config.frames;
  s.grid = config.grid;
  s.visibility = config.visibility;
  s.comm_range = config.comm_range;

  for (int i = 0; i < config.agent_count; ++i) {
    Agent a;
    a.id = static_cast<std::uint32_t>(i);
    a.profile = named_profile(config.profiles[static_cast<std::size_t>(i) % config.profiles.size()]);
    const double yaw = config.agent_yaw_sigma * rng.normal();
    if (i == 0) {
      a.pose = Pose2D::make(0.0, 0.0, yaw);
    } else {
      const double d = rng.uniform(config.sender_min_distance, config.sender_max_distance);
      const double bearing = rng.uniform(-kPi, kPi);
      a.pose = Pose2D::make(d * std::cos(bearing), d * std::sin(bearing), yaw);
    }
    s.agents.push_back(std::move(a));
  }

  const double ext = config.object_extent;
  const auto near_agent = [&s](const Box3D& b, double clearance) {
    const Box3D grown = inflate(b, clearance);
    return std::any_of(s.agents.begin(), s.agents.end(), [&grown](const Agent& a) {
      return grown.contains_bev({a.pose.x, a.pose.y});
    });
  };

  for (int i = 0; i < config.occluder_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      Box3D o;
      o.x = rng.uniform(-ext, ext);
      o.y = rng.uniform(-ext, ext);
      o.l = rng.uniform(4.0, 12.0);
      o.w = rng.uniform(2.0, 5.0);
      o.h = 3.0;
      o.z = 0.0;
      o.yaw = normalize_angle((rng.below(2) ? 0.5 * kPi : 0.0) + 0.1 * rng.normal());
      o.score = 1.0;
      if (near_agent(o, 4.0)) continue;
      s.occluders.push_back(o);
      placed = true;
    }
    if (!placed) throw InvalidInput("generate_scenario: could not place occluder " + std::to_string(i));
  }

  for (int i = 0; i < config.object_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      Box3D b;
      b.x = rng.uniform(-ext, ext);
      b.y = rng.uniform(-ext, ext);
      b.l = rng.uniform(3.6, 4.6);
      b.w = rng.uniform(1.6, 2.0);
      b.h = rng.uniform(1.4, 1.8);
      b.z = -1.0 + 0.1 * rng.normal();
      if (config.heading_mode == "axis") {
        b.yaw = normalize_angle((rng.below(2) ? 0.5 * kPi : 0.0) + config.heading_sigma * rng.normal());
      } else {
        b.yaw = rng.uniform(-kPi, kPi);
      }
      b.score = 1.0;
      if (near_agent(b, 3.0)) continue;
      const Box3D grown = inflate(b, 0.5);
      const auto clash = [&grown](const Box3D& other) { return footprints_overlap(grown, other); };
      if (std::any_of(s.objects.begin(), s.objects.end(), clash)) continue;
      if (std::any_of(s.occluders.begin(), s.occluders.end(), clash)) continue;
      s.objects.push_back(b);
      placed = true;
    }
    if (!placed) {
      throw InvalidInput("generate_scenario: infeasible object density, could not place object " +
                         std::to_string(i) + " after " + std::to_string(config.max_retries) +
                         " attempts");
    }
  }
  return s;
}

Scenario recovery_fixture(double sender_score) {
  if (!(sender_score > 0.0 && sender_score <= 1.0)) {
    throw InvalidInput("recovery_fixture: sender_score must be in (0, 1]");
  }
  Scenario s;
  s.seed = 0;
  s.frames = 1;
  BackboneProfile sender = named_profile("ideal");
  sender.name = "capped";
  sender.calibration = {{0.0, 0.0}, {1.0, sender_score}};
  s.agents = {Agent{0, Pose2D{}, named_profile("ideal")}, Agent{1, Pose2D::make(15.0, 20.0, 0.0), sender}};
  s.objects = {Box3D{0.0, 20.0, -1.0, 3.9, 1.6, 1.56, 0.0, 1.0},
               Box3D{10.0, -10.0, -1.0, 3.9, 1.6, 1.56, 0.0, 1.0}};
  s.occluders = {Box3D{0.0, 10.0, 0.0, 8.0, 2.0, 2.0, 0.0, 1.0}};
  return s;
}

}  // namespace headfuse
