#pragma once

// Scenario data model and binary (de)serialization.
// An episode covers 8 s at 10 Hz: 80 expert poses, 79 transitions.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "latentplan/geometry.hpp"

namespace latentplan {

constexpr double kDt = 0.1;            // 10 Hz
constexpr int kTrajectoryLen = 80;     // expert poses per episode
constexpr int kEpisodeSteps = kTrajectoryLen - 1;
constexpr double kEgoLength = 4.8;
constexpr double kEgoWidth = 2.0;
constexpr double kLaneHalfWidth = 3.5;  // 7 m corridor
constexpr int kMaxAgents = 128;

enum class SceneType : std::uint32_t { Stationary = 0, Straight, TurnLeft, TurnRight, UTurn };

inline const char* scene_type_name(SceneType t) {
  switch (t) {
    case SceneType::Stationary: return "stationary";
    case SceneType::Straight: return "straight";
    case SceneType::TurnLeft: return "turn_left";
    case SceneType::TurnRight: return "turn_right";
    case SceneType::UTurn: return "uturn";
  }
  return "?";
}

inline SceneType scene_type_from_name(const std::string& s) {
  if (s == "stationary") return SceneType::Stationary;
  if (s == "straight") return SceneType::Straight;
  if (s == "turn_left") return SceneType::TurnLeft;
  if (s == "turn_right") return SceneType::TurnRight;
  if (s == "uturn") return SceneType::UTurn;
  throw GeometryError("unknown scene type: " + s);
}

struct AgentTrack {
  enum class Behavior : std::uint32_t { LogReplay = 0, Idm = 1 };

  Pose2D initial;
  double speed = 0;  // m/s, also the IDM desired speed
  double length = 4.5, width = 1.9;
  Behavior behavior = Behavior::LogReplay;
  std::vector<Vec2> path;         // lane path the agent follows
  std::vector<Pose2D> replay;     // kTrajectoryLen poses (index 0 == initial)
};

struct Scenario {
  std::string id;
  std::uint64_t seed = 0;
  SceneType scene_type = SceneType::Straight;
  std::vector<Vec2> road_polygon;  // drivable area (simple polygon)
  std::vector<Vec2> centerline;    // full lane centerline
  std::vector<Vec2> route;         // progress reference: centerline truncated at expert end
  std::vector<Pose2D> expert;      // kTrajectoryLen poses
  std::vector<AgentTrack> agents;
  double ego_length = kEgoLength;
  double ego_width = kEgoWidth;

  Polygon road() const { return Polygon(road_polygon); }
  Polyline route_line() const { return Polyline(route); }
};

// ---- binary serialization ----

struct ScenarioError : std::runtime_error {
  explicit ScenarioError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
constexpr char kScenMagic[4] = {'L', 'P', 'S', 'C'};
constexpr std::uint32_t kScenVersion = 1;

inline void w_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void w_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void w_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void w_str(std::ostream& os, const std::string& s) {
  w_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void w_vec2s(std::ostream& os, const std::vector<Vec2>& v) {
  w_u32(os, static_cast<std::uint32_t>(v.size()));
  for (auto p : v) { w_f64(os, p.x); w_f64(os, p.y); }
}
inline void w_poses(std::ostream& os, const std::vector<Pose2D>& v) {
  w_u32(os, static_cast<std::uint32_t>(v.size()));
  for (auto p : v) { w_f64(os, p.x); w_f64(os, p.y); w_f64(os, p.yaw); }
}

inline std::uint32_t r_u32(std::istream& is) {
  std::uint32_t v;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ScenarioError("scenario file truncated");
  return v;
}
inline std::uint64_t r_u64(std::istream& is) {
  std::uint64_t v;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw ScenarioError("scenario file truncated");
  return v;
}
inline double r_f64(std::istream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw ScenarioError("scenario file truncated");
  return v;
}
inline std::string r_str(std::istream& is) {
  std::uint32_t n = r_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw ScenarioError("scenario file truncated");
  return s;
}
inline std::vector<Vec2> r_vec2s(std::istream& is) {
  std::uint32_t n = r_u32(is);
  std::vector<Vec2> v(n);
  for (auto& p : v) { p.x = r_f64(is); p.y = r_f64(is); }
  return v;
}
inline std::vector<Pose2D> r_poses(std::istream& is) {
  std::uint32_t n = r_u32(is);
  std::vector<Pose2D> v(n);
  for (auto& p : v) { p.x = r_f64(is); p.y = r_f64(is); p.yaw = r_f64(is); }
  return v;
}
}  // namespace detail

inline void serialize_scenario(const Scenario& sc, std::ostream& os) {
  using namespace detail;
  os.write(kScenMagic, 4);
  w_u32(os, kScenVersion);
  w_str(os, sc.id);
  w_u64(os, sc.seed);
  w_u32(os, static_cast<std::uint32_t>(sc.scene_type));
  w_f64(os, sc.ego_length);
  w_f64(os, sc.ego_width);
  w_vec2s(os, sc.road_polygon);
  w_vec2s(os, sc.centerline);
  w_vec2s(os, sc.route);
  w_poses(os, sc.expert);
  w_u32(os, static_cast<std::uint32_t>(sc.agents.size()));
  for (const auto& a : sc.agents) {
    w_f64(os, a.initial.x); w_f64(os, a.initial.y); w_f64(os, a.initial.yaw);
    w_f64(os, a.speed);
    w_f64(os, a.length);
    w_f64(os, a.width);
    w_u32(os, static_cast<std::uint32_t>(a.behavior));
    w_vec2s(os, a.path);
    w_poses(os, a.replay);
  }
}

inline Scenario deserialize_scenario(std::istream& is) {
  using namespace detail;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kScenMagic, 4) != 0)
    throw ScenarioError("bad scenario magic number");
  const std::uint32_t version = r_u32(is);
  if (version != kScenVersion)
    throw ScenarioError("unsupported scenario version " + std::to_string(version));
  Scenario sc;
  sc.id = r_str(is);
  sc.seed = r_u64(is);
  sc.scene_type = static_cast<SceneType>(r_u32(is));
  sc.ego_length = r_f64(is);
  sc.ego_width = r_f64(is);
  sc.road_polygon = r_vec2s(is);
  sc.centerline = r_vec2s(is);
  sc.route = r_vec2s(is);
  sc.expert = r_poses(is);
  const std::uint32_t n_agents = r_u32(is);
  if (n_agents > kMaxAgents) throw ScenarioError("agent count exceeds limit");
  sc.agents.resize(n_agents);
  for (auto& a : sc.agents) {
    double x = r_f64(is), y = r_f64(is), yaw = r_f64(is);
    a.initial = Pose2D(x, y, yaw);
    a.speed = r_f64(is);
    a.length = r_f64(is);
    a.width = r_f64(is);
    a.behavior = static_cast<AgentTrack::Behavior>(r_u32(is));
    a.path = r_vec2s(is);
    a.replay = r_poses(is);
  }
  return sc;
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ScenarioError("cannot open for writing: " + path);
  serialize_scenario(sc, os);
  if (!os) throw ScenarioError("write failed: " + path);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ScenarioError("cannot open: " + path);
  return deserialize_scenario(is);
}

}  // namespace latentplan
