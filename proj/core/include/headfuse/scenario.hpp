#ifndef HEADFUSE_SCENARIO_HPP_
#define HEADFUSE_SCENARIO_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "headfuse/geometry.hpp"

namespace headfuse {

// Simulated detector characteristics. Sigmas are >= 0; the calibration
// curve is a monotone piecewise-linear map [0,1] -> [0,1] given as (x, y)
// knots starting at x = 0 and ending at x = 1.
struct BackboneProfile {
  std::string name = "ideal";
  double score_sigma = 0.0;
  double reg_sigma = 0.0;  // metres
  int blur_radius = 0;     // cells
  double blur_decay = 0.5; // score factor per ring of blur
  std::vector<std::pair<double, double>> calibration{{0.0, 0.0}, {1.0, 1.0}};
  // Linear range attenuation from 1 at falloff_start to 0 at falloff_end.
  // falloff_end <= falloff_start disables it.
  double falloff_start = 0.0;
  double falloff_end = 0.0;
  // Extra regression noise on cells deep inside an object footprint.
  double interior_noise_gain = 0.0;
  // Expected spurious detections per frame and their score ceiling.
  double ghost_rate = 0.0;
  double ghost_score_max = 0.0;

  void validate() const;
  double calibrate(double x) const;
  double range_factor(double distance) const noexcept;

  nlohmann::json to_json() const;
  static BackboneProfile from_json(const nlohmann::json& j);
  friend bool operator==(const BackboneProfile&, const BackboneProfile&) = default;
};

// "ideal", "pillars" (ego-like) or "second" (sender-like, under-confident).
BackboneProfile named_profile(const std::string& name);

struct VisibilityModel {
  int ray_count = 5;
  void validate() const;
  friend bool operator==(const VisibilityModel&, const VisibilityModel&) = default;
};

struct Agent {
  std::uint32_t id = 0;
  Pose2D pose;
  BackboneProfile profile;
  friend bool operator==(const Agent&, const Agent&) = default;
};

struct ScenarioConfig {
  int agent_count = 2;
  std::vector<std::string> profiles{"pillars", "second"};  // cycled over agents
  int object_count = 20;
  int occluder_count = 8;
  int frames = 2;
  // Objects are placed inside this square around the ego (metres).
  double object_extent = 38.0;
  double sender_min_distance = 15.0;
  double sender_max_distance = 30.0;
  double agent_yaw_sigma = 0.05;
  // "axis": headings near 0 or pi/2 (sigma heading_sigma); "uniform": any.
  std::string heading_mode = "axis";
  double heading_sigma = 0.05;
  double comm_range = 70.0;
  BEVGridSpec grid;
  VisibilityModel visibility;
  int max_retries = 2000;

  void validate() const;
  nlohmann::json to_json() const;
  // Absent keys keep their defaults.
  static ScenarioConfig from_json(const nlohmann::json& j);
};

struct Scenario {
  std::uint64_t seed = 0;
  std::vector<Agent> agents;     // agents[0] is the ego
  std::vector<Box3D> objects;    // world frame
  std::vector<Box3D> occluders;  // world-frame rectangles (z, h ignored)
  int frames = 1;
  BEVGridSpec grid;              // every agent's local grid
  VisibilityModel visibility;
  double comm_range = 70.0;

  void validate() const;
  const Agent& agent(std::uint32_t id) const;
  nlohmann::json to_json() const;
  static Scenario from_json(const nlohmann::json& j);
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// Deterministic in (seed, config). Objects are pairwise non-overlapping and
// clear of occluders and agents. Throws InvalidInput when placement fails
// after config.max_retries attempts per item.
Scenario generate_scenario(std::uint64_t seed, const ScenarioConfig& config = {});

// Two noiseless agents and two cars. Car 0 sits behind a wall as seen from
// the ego and in plain view of the sender, whose calibration caps every
// score at `sender_score`; car 1 is visible to both.
Scenario recovery_fixture(double sender_score = 0.6);

}  // namespace headfuse

#endif  // HEADFUSE_SCENARIO_HPP_
