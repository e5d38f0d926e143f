#pragma once

// Synthetic scenario generation: analytic corridor roads, a pure-pursuit
// expert driver, background agents, scene classification and dataset IO.

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "latentplan/scenario.hpp"

namespace latentplan {

// ---- scene classification ----

// Thresholds for the curvature/heading-difference decision rule.
constexpr double kStationaryPathLen = 3.0;   // m
constexpr double kKappaTurnLow = 0.03;
constexpr double kKappaTurnMid = 0.1;
constexpr double kKappaUTurn = 0.18;
constexpr double kDeltaTurn = 0.2;
constexpr int kCurvatureWindow = 5;          // 0.5 s at 10 Hz

inline double path_length(const std::vector<Vec2>& pts) {
  double s = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) s += norm(pts[i] - pts[i - 1]);
  return s;
}

// Drop near-coincident points so curvature estimates are well conditioned.
inline std::vector<Vec2> dedupe_points(const std::vector<Vec2>& pts, double min_gap = 1e-6) {
  std::vector<Vec2> out;
  for (const auto& p : pts)
    if (out.empty() || norm(p - out.back()) > min_gap) out.push_back(p);
  return out;
}

inline SceneType classify_scene(const std::vector<Vec2>& trajectory) {
  if (trajectory.size() < 2 || path_length(trajectory) < kStationaryPathLen)
    return SceneType::Stationary;
  auto pts = dedupe_points(trajectory);
  if (pts.size() < 2) return SceneType::Stationary;
  Polyline path(pts);
  const double kappa = max_menger_curvature(path, kCurvatureWindow);
  const double delta = heading_difference(path);
  if (kappa >= kKappaUTurn) return SceneType::UTurn;
  const bool turning = (kappa > kKappaTurnLow && kappa < kKappaUTurn && delta > kDeltaTurn) ||
                       (kappa > kKappaTurnMid && kappa < kKappaUTurn);
  if (turning)
    return net_heading_change(path) >= 0 ? SceneType::TurnLeft : SceneType::TurnRight;
  return SceneType::Straight;
}

inline SceneType classify_scene(const std::vector<Pose2D>& trajectory) {
  std::vector<Vec2> pts;
  pts.reserve(trajectory.size());
  for (const auto& p : trajectory) pts.push_back(p.position());
  return classify_scene(pts);
}

// ---- road construction ----

namespace detail {

inline std::vector<Vec2> offset_polyline(const std::vector<Vec2>& line, double offset) {
  std::vector<Vec2> out;
  const std::size_t n = line.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 d;
    if (i == 0) d = line[1] - line[0];
    else if (i + 1 == n) d = line[n - 1] - line[n - 2];
    else d = line[i + 1] - line[i - 1];
    const double len = norm(d);
    const Vec2 normal{-d.y / len, d.x / len};
    out.push_back(line[i] + normal * offset);
  }
  return out;
}

// corridor polygon of half-width hw around a centerline, extended past both
// ends so a vehicle box centered on an endpoint stays inside
inline std::vector<Vec2> corridor_polygon(const std::vector<Vec2>& center, double hw,
                                          double end_margin = 8.0) {
  std::vector<Vec2> ext = center;
  {
    Vec2 d0 = ext[1] - ext[0];
    d0 = d0 * (1.0 / norm(d0));
    ext.insert(ext.begin(), ext.front() - d0 * end_margin);
    Vec2 d1 = ext.back() - ext[ext.size() - 2];
    d1 = d1 * (1.0 / norm(d1));
    ext.push_back(ext.back() + d1 * end_margin);
  }
  auto left = offset_polyline(ext, hw);
  auto right = offset_polyline(ext, -hw);
  std::vector<Vec2> poly = left;
  poly.insert(poly.end(), right.rbegin(), right.rend());
  return dedupe_points(poly, 1e-6);
}

// centerline pieces: straight lead-in, circular arc, straight lead-out
inline std::vector<Vec2> arc_centerline(double lead_in, double radius, double arc_angle,
                                        double lead_out, double sample_ds = 1.0) {
  std::vector<Vec2> pts;
  for (double s = 0; s < lead_in; s += sample_ds) pts.push_back({s, 0});
  pts.push_back({lead_in, 0});
  if (arc_angle != 0.0) {
    const double sgn = arc_angle > 0 ? 1.0 : -1.0;
    const Vec2 c{lead_in, sgn * radius};
    const double total = std::fabs(arc_angle);
    const int n = std::max(8, static_cast<int>(radius * total / sample_ds));
    for (int i = 1; i <= n; ++i) {
      const double a = total * i / n;
      pts.push_back({c.x + radius * std::sin(a), c.y - sgn * radius * std::cos(a)});
    }
    // heading after the arc
    const double h = arc_angle;
    const Vec2 end = pts.back();
    const Vec2 dir{std::cos(h), std::sin(h)};
    for (double s = sample_ds; s <= lead_out; s += sample_ds) pts.push_back(end + dir * s);
  } else {
    for (double s = sample_ds; s <= lead_out; s += sample_ds) pts.push_back({lead_in + s, 0});
  }
  return dedupe_points(pts, 1e-6);
}

}  // namespace detail

// ---- pure-pursuit expert ----

// Tracks the centerline at constant cruise speed; returns kTrajectoryLen poses.
// With wander > 0, white per-step heading noise (std = `wander` radians) rides
// on top of the pursuit steering: the demonstrations then carry an irreducible
// stochastic component that is unpredictable from the action history, while
// the pursuit loop keeps the path on the road.
inline std::vector<Pose2D> pure_pursuit_trajectory(const Polyline& centerline, double cruise,
                                                   double lookahead_base = 2.5,
                                                   double lookahead_gain = 0.45,
                                                   double wander = 0.0,
                                                   std::mt19937_64* rng = nullptr) {
  std::vector<Pose2D> traj;
  Pose2D pose(centerline.points()[0].x, centerline.points()[0].y, centerline.heading_at(0));
  traj.push_back(pose);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int step = 0; step < kEpisodeSteps; ++step) {
    const double ld = lookahead_base + lookahead_gain * cruise;
    const double s = centerline.project(pose.position());
    const Vec2 target = centerline.point_at(s + ld);
    const Vec2 local = pose.to_local(target);
    const double dist2 = local.x * local.x + local.y * local.y;
    double curv = dist2 > 1e-9 ? 2.0 * local.y / dist2 : 0.0;
    curv = std::clamp(curv, -0.5, 0.5);
    double dyaw = cruise * curv * kDt;
    if (wander > 0.0 && rng) dyaw += wander * n01(*rng);
    const double ds = cruise * kDt;
    // midpoint heading integration keeps the path on the arc
    Pose2D half(pose.x, pose.y, pose.yaw + dyaw / 2);
    pose = Pose2D(half.x + std::cos(half.yaw) * ds, half.y + std::sin(half.yaw) * ds,
                  pose.yaw + dyaw);
    traj.push_back(pose);
  }
  return traj;
}

// Pure-pursuit steering with car-following longitudinal control: the expert
// tracks the centerline while holding an intelligent-driver-model gap to a
// lead vehicle whose arc position along the centerline is given per step.
// Braking and acceleration are therefore caused by the lead's (externally
// chosen) speed changes — behavior a policy can only reproduce by reading the
// scene, not by extrapolating its own action history.
inline std::vector<Pose2D> car_following_trajectory(const Polyline& centerline, double cruise,
                                                    const std::vector<double>& lead_arc,
                                                    double bumper_gap,
                                                    double lookahead_base = 2.5,
                                                    double lookahead_gain = 0.45,
                                                    double wander = 0.0,
                                                    std::mt19937_64* rng = nullptr) {
  constexpr double kAccel = 2.0, kBrake = 3.0, kHeadway = 1.2, kMinGap = 2.0;
  std::vector<Pose2D> traj;
  Pose2D pose(centerline.points()[0].x, centerline.points()[0].y, centerline.heading_at(0));
  traj.push_back(pose);
  double v = cruise;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int step = 0; step < kEpisodeSteps; ++step) {
    const double s_ego = centerline.project(pose.position());
    const double gap = std::max(lead_arc[step] - s_ego - bumper_gap, 0.1);
    const double lead_v = (lead_arc[std::min(step + 1, kEpisodeSteps)] - lead_arc[step]) / kDt;
    const double dv = v - lead_v;
    const double s_star =
        kMinGap + std::max(0.0, v * kHeadway + v * dv / (2.0 * std::sqrt(kAccel * kBrake)));
    const double acc =
        kAccel * (1.0 - std::pow(v / cruise, 4.0) - (s_star / gap) * (s_star / gap));
    v = std::clamp(v + acc * kDt, 0.0, cruise);
    const double ld = lookahead_base + lookahead_gain * v;
    const Vec2 target = centerline.point_at(s_ego + ld);
    const Vec2 local = pose.to_local(target);
    const double dist2 = local.x * local.x + local.y * local.y;
    double curv = dist2 > 1e-9 ? 2.0 * local.y / dist2 : 0.0;
    curv = std::clamp(curv, -0.5, 0.5);
    double dyaw = v * curv * kDt;
    if (wander > 0.0 && rng) dyaw += wander * n01(*rng);
    const double ds = v * kDt;
    Pose2D half(pose.x, pose.y, pose.yaw + dyaw / 2);
    pose = Pose2D(half.x + std::cos(half.yaw) * ds, half.y + std::sin(half.yaw) * ds,
                  pose.yaw + dyaw);
    traj.push_back(pose);
  }
  return traj;
}

// ---- generation ----

struct GenParams {
  int min_agents = 0;
  int max_agents = 5;
  int max_attempts = 100;
  double wander = 0.0;     // expert white heading-noise std, radians per step
  double lead_prob = 0.0;  // chance a moving scene gets a slower lead vehicle on the route
};

namespace detail {

struct RoadSpec {
  std::vector<Vec2> centerline;
  double cruise = 0;
};

inline RoadSpec sample_road(SceneType kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  RoadSpec rs;
  switch (kind) {
    case SceneType::Stationary: {
      rs.cruise = 0.0;
      rs.centerline = arc_centerline(40.0, 0, 0, 0);
      break;
    }
    case SceneType::Straight: {
      rs.cruise = 6.0 + 6.0 * u01(rng);
      rs.centerline = arc_centerline(rs.cruise * kDt * kEpisodeSteps + 30.0, 0, 0, 0);
      break;
    }
    case SceneType::TurnLeft:
    case SceneType::TurnRight: {
      rs.cruise = 5.0 + 3.0 * u01(rng);
      const double radius = 6.0 + 10.0 * u01(rng);
      const double sgn = kind == SceneType::TurnLeft ? 1.0 : -1.0;
      rs.centerline = arc_centerline(8.0, radius, sgn * M_PI / 2, 40.0);
      break;
    }
    case SceneType::UTurn: {
      rs.cruise = 3.6 + 1.4 * u01(rng);
      const double radius = 4.2 + 1.2 * u01(rng);
      rs.centerline = arc_centerline(6.0, radius, M_PI, 30.0, 0.5);
      break;
    }
  }
  return rs;
}

}  // namespace detail

inline Scenario generate_scenario(SceneType kind, std::uint64_t seed,
                                  const GenParams& params = GenParams{}) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    auto rs = detail::sample_road(kind, rng);
    Polyline center(rs.centerline);

    // optional lead vehicle: starts ahead of the ego on the centerline and
    // changes speed every 2 s, forcing the expert to brake and accelerate in
    // response to what it sees rather than follow a constant-speed profile
    const double kLeadLen = 4.5;
    std::vector<double> lead_arc;
    if (params.lead_prob > 0.0 && kind != SceneType::Stationary) {
      std::uniform_real_distribution<double> u01l(0.0, 1.0);
      if (u01l(rng) < params.lead_prob) {
        double s = 14.0 + 8.0 * u01l(rng);
        double vk = 0.0;
        lead_arc.resize(kTrajectoryLen);
        for (int t = 0; t < kTrajectoryLen; ++t) {
          if (t % 20 == 0) vk = rs.cruise * (0.30 + 0.55 * u01l(rng));
          lead_arc[t] = s;
          s += vk * kDt;
        }
      }
    }
    const double bumper_gap = (kLeadLen + kEgoLength) / 2;

    std::vector<Pose2D> expert;
    if (kind == SceneType::Stationary) {
      Pose2D start(rs.centerline[0].x, rs.centerline[0].y, center.heading_at(0));
      expert.assign(kTrajectoryLen, start);
    } else if (!lead_arc.empty()) {
      expert = car_following_trajectory(center, rs.cruise, lead_arc, bumper_gap, 2.5, 0.45,
                                        params.wander, &rng);
    } else {
      expert = pure_pursuit_trajectory(center, rs.cruise, 2.5, 0.45, params.wander, &rng);
    }
    if (classify_scene(expert) != kind) continue;

    // the following expert must keep a positive bumper gap to the lead
    if (!lead_arc.empty()) {
      bool safe = true;
      for (int t = 0; t < kTrajectoryLen; ++t)
        if (lead_arc[t] - center.project(expert[t].position()) - bumper_gap < 0.3) {
          safe = false;
          break;
        }
      if (!safe) continue;
    }

    Scenario sc;
    sc.seed = seed;
    sc.scene_type = kind;
    sc.centerline = rs.centerline;
    sc.road_polygon = detail::corridor_polygon(rs.centerline, kLaneHalfWidth);

    // route: centerline up to the expert's final progress (stationary keeps a stub)
    if (kind == SceneType::Stationary) {
      sc.route = {rs.centerline[0], center.point_at(1.0)};
    } else {
      const double end_s = center.project(expert.back().position());
      std::vector<Vec2> route;
      double s = 0;
      route.push_back(rs.centerline[0]);
      for (std::size_t i = 1; i < rs.centerline.size(); ++i) {
        s += norm(rs.centerline[i] - rs.centerline[i - 1]);
        if (s >= end_s) break;
        route.push_back(rs.centerline[i]);
      }
      route.push_back(center.point_at(end_s));
      sc.route = dedupe_points(route, 1e-6);
      if (sc.route.size() < 2 || path_length(sc.route) < 5.0) continue;
    }
    sc.expert = expert;

    // expert must stay on-road (checked here so the generated set satisfies it
    // by construction)
    {
      Polygon road = sc.road();
      bool ok = true;
      for (const auto& p : expert) {
        OrientedBox box(p, sc.ego_length, sc.ego_width);
        for (const auto& c : box.corners())
          if (!road.contains(c)) { ok = false; break; }
        if (!ok) break;
      }
      if (!ok) continue;
    }

    if (!lead_arc.empty()) {
      AgentTrack a;
      a.speed = (lead_arc.back() - lead_arc.front()) / (kDt * kEpisodeSteps);
      a.length = kLeadLen;
      a.width = 1.9;
      const double total_len = center.length();
      const Vec2 p0 = center.point_at(lead_arc[0]);
      a.initial = Pose2D(p0.x, p0.y, center.heading_at(std::min(lead_arc[0], total_len - 0.5)));
      a.path = rs.centerline;
      a.replay.reserve(kTrajectoryLen);
      for (int t = 0; t < kTrajectoryLen; ++t) {
        const Vec2 p = center.point_at(lead_arc[t]);
        a.replay.emplace_back(p.x, p.y, center.heading_at(std::min(lead_arc[t], total_len - 0.5)));
      }
      sc.agents.push_back(std::move(a));
    }

    // background agents share the corridor, spaced so neither the expert nor
    // a parked ego can reach them
    std::uniform_int_distribution<int> n_agents_dist(params.min_agents, params.max_agents);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int n_agents = n_agents_dist(rng);
    const double total_len = center.length();
    const double expert_end_s =
        kind == SceneType::Stationary ? 0.0 : center.project(expert.back().position());
    double lead_s = expert_end_s + 14.0;  // first agent ahead of the expert's final position
    for (int i = 0; i < n_agents && static_cast<int>(sc.agents.size()) < kMaxAgents; ++i) {
      AgentTrack a;
      a.speed = rs.cruise > 0 ? rs.cruise * (1.05 + 0.3 * u01(rng)) : 4.0 + 3.0 * u01(rng);
      a.length = 4.2 + 0.6 * u01(rng);
      a.width = 1.8 + 0.2 * u01(rng);
      const double s0 = lead_s;
      lead_s += a.length + 8.0 + 12.0 * u01(rng);
      if (s0 > total_len - 2.0) break;
      const Vec2 p0 = center.point_at(s0);
      a.initial = Pose2D(p0.x, p0.y, center.heading_at(s0));
      a.path = rs.centerline;
      a.replay.reserve(kTrajectoryLen);
      for (int t = 0; t < kTrajectoryLen; ++t) {
        const double s = s0 + a.speed * kDt * t;
        const Vec2 p = center.point_at(s);
        a.replay.emplace_back(p.x, p.y, center.heading_at(std::min(s, total_len - 0.5)));
      }
      sc.agents.push_back(std::move(a));
    }

    std::ostringstream id;
    id << scene_type_name(kind) << "_" << std::hex << seed;
    sc.id = id.str();
    return sc;
  }
  throw ScenarioError("generator failed to satisfy classifier for kind " +
                      std::string(scene_type_name(kind)));
}

// ---- dataset IO ----

struct ManifestEntry {
  std::string id;
  SceneType scene_type;
  std::uint64_t seed;
};

struct DatasetCounts {
  int stationary = 0, straight = 0, turn_left = 0, turn_right = 0, uturn = 0;
  int total() const { return stationary + straight + turn_left + turn_right + uturn; }
};

// Fig-style default mix per 100 scenarios.
inline DatasetCounts paper_mix(int total) {
  DatasetCounts c;
  c.stationary = total * 25 / 100;
  c.straight = total * 59 / 100;
  c.turn_left = total * 7 / 100;
  c.turn_right = total * 8 / 100;
  c.uturn = std::max(total > 0 ? 1 : 0, total * 1 / 100);
  c.straight += total - c.total();  // remainder goes to the majority class
  return c;
}

inline std::vector<ManifestEntry> write_dataset(const std::string& dir, const std::string& split,
                                                const DatasetCounts& counts, std::uint64_t seed,
                                                const GenParams& params = GenParams{}) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(dir) / "scenarios" / split;
  fs::create_directories(base);
  std::vector<std::pair<SceneType, int>> plan = {
      {SceneType::Stationary, counts.stationary}, {SceneType::Straight, counts.straight},
      {SceneType::TurnLeft, counts.turn_left},    {SceneType::TurnRight, counts.turn_right},
      {SceneType::UTurn, counts.uturn}};
  std::vector<ManifestEntry> manifest;
  std::uint64_t k = 0;
  for (auto [kind, n] : plan)
    for (int i = 0; i < n; ++i, ++k) {
      Scenario sc = generate_scenario(kind, seed * 1000003ULL + k, params);
      save_scenario(sc, (base / (sc.id + ".bin")).string());
      manifest.push_back({sc.id, kind, sc.seed});
    }
  std::ofstream mf(fs::path(dir) / ("manifest_" + split + ".txt"));
  for (const auto& e : manifest)
    mf << e.id << "\t" << scene_type_name(e.scene_type) << "\t" << e.seed << "\n";
  return manifest;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& dir, const std::string& split) {
  std::ifstream mf(std::filesystem::path(dir) / ("manifest_" + split + ".txt"));
  if (!mf) throw ScenarioError("cannot open manifest for split " + split + " in " + dir);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string type_name;
    std::getline(ls, e.id, '\t');
    std::getline(ls, type_name, '\t');
    ls >> e.seed;
    e.scene_type = scene_type_from_name(type_name);
    out.push_back(e);
  }
  return out;
}

inline Scenario load_dataset_scenario(const std::string& dir, const std::string& split,
                                      const std::string& id) {
  return load_scenario(
      (std::filesystem::path(dir) / "scenarios" / split / (id + ".bin")).string());
}

}  // namespace latentplan
