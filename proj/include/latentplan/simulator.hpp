#pragma once

// Closed-loop environment: ego waypoint actions, background agents (log
// replay or IDM), collision/off-road latching, progress and the arrival-rate
// metric family.

#include <array>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "latentplan/scenegen.hpp"

namespace latentplan {

struct SimulatorError : std::runtime_error {
  explicit SimulatorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Ego-frame displacement per 0.1 s step.
struct EgoAction {
  double dx = 0, dy = 0, dyaw = 0;
};

enum class AgentControlMode { Replay, Idm };

// ---- IDM ----

struct IdmParams {
  double a_max = 1.5;   // m/s^2
  double b = 2.0;       // comfortable braking, m/s^2
  double b_max = 6.0;   // emergency braking
  double s0 = 2.0;      // minimum gap, m
  double T = 1.5;       // time headway, s
  int exponent = 4;
};

// v: own speed, v0: desired speed, gap: bumper gap to leader (<=0 means
// overlapping -> emergency braking), dv: closing speed (v - v_leader).
// Pass gap = +inf when there is no leader.
inline double idm_accel(double v, double v0, double gap, double dv,
                        const IdmParams& p = IdmParams{}) {
  if (v0 <= 0) return 0.0;
  const double free_term = 1.0 - std::pow(v / v0, p.exponent);
  if (!std::isfinite(gap)) return p.a_max * free_term;
  if (gap <= 0) return -p.b_max;
  const double s_star = p.s0 + v * p.T + v * dv / (2.0 * std::sqrt(p.a_max * p.b));
  const double interaction = (s_star > 0 ? s_star : 0.0) / gap;
  return p.a_max * (free_term - interaction * interaction);
}

// ---- simulation state ----

struct AgentState {
  Pose2D pose;
  double speed = 0;
  double arc = 0;  // position along the agent's path
};

struct SimState {
  int step = 0;
  Pose2D ego;
  double ego_speed = 0;
  std::vector<AgentState> agents;
  bool collided = false;  // latched
  bool offroad = false;   // latched
  int first_collision_step = -1;
  int first_offroad_step = -1;
};

struct EpisodeResult {
  double progress_ratio = 0;  // [0, 1]
  bool collided = false;
  bool offroad = false;
  int first_collision_step = -1;
  int first_offroad_step = -1;
  SceneType scene_type = SceneType::Straight;
  std::vector<Pose2D> trace;  // per-step ego poses, including the start
};

// exact ego-frame delta between consecutive expert poses
inline EgoAction expert_action(const Scenario& sc, int step) {
  const Pose2D& a = sc.expert[step];
  const Pose2D& b = sc.expert[step + 1];
  const Vec2 local = a.to_local(b.position());
  return {local.x, local.y, wrap_angle(b.yaw - a.yaw)};
}

class Simulator {
 public:
  Simulator(const Scenario& sc, AgentControlMode mode = AgentControlMode::Replay)
      : sc_(&sc), road_(sc.road()), route_(sc.route_line()), mode_(mode) {
    if (route_.length() <= 0) throw SimulatorError("zero-length route");
    reset();
  }

  void reset() {
    state_ = SimState{};
    arrived_ = false;
    state_.ego = sc_->expert.front();
    state_.ego_speed = 0;
    for (const auto& a : sc_->agents) {
      AgentState as;
      as.pose = a.initial;
      as.speed = a.speed;
      if (!a.path.empty()) as.arc = Polyline(a.path).project(a.initial.position());
      state_.agents.push_back(as);
    }
    trace_.assign(1, state_.ego);
  }

  const SimState& state() const { return state_; }
  const std::vector<Pose2D>& trace() const { return trace_; }
  bool arrived() const { return arrived_; }
  bool done() const { return state_.step >= kEpisodeSteps || arrived_; }

  void apply_ego_action(const EgoAction& a) {
    state_.ego = state_.ego.compose(a.dx, a.dy, a.dyaw);
    state_.ego_speed = std::hypot(a.dx, a.dy) / kDt;
  }

  void step(const EgoAction& a) {
    if (done()) throw SimulatorError("stepping a finished episode");
    apply_ego_action(a);
    advance_agents();
    ++state_.step;
    trace_.push_back(state_.ego);
    check_safety();
    // the episode ends when the ego reaches the route end; what it would do
    // past its destination is not part of the task. Stub routes (a parked
    // ego projects onto them immediately) never trigger arrival.
    if (route_.length() >= kStationaryPathLen &&
        route_.project(state_.ego.position()) >= route_.length() - 0.25)
      arrived_ = true;
  }

  EpisodeResult finish() const {
    EpisodeResult r;
    r.collided = state_.collided;
    r.offroad = state_.offroad;
    r.first_collision_step = state_.first_collision_step;
    r.first_offroad_step = state_.first_offroad_step;
    r.scene_type = sc_->scene_type;
    r.trace = trace_;
    r.progress_ratio = progress_ratio();
    return r;
  }

  double progress_ratio() const {
    const double route_len = route_.length();
    const Vec2 start = trace_.front().position();
    // short-route (stationary) rule: staying put safely counts as full progress
    if (route_len < kStationaryPathLen) {
      bool stayed = true;
      for (const auto& p : trace_)
        if (norm(p.position() - start) > 1.0) { stayed = false; break; }
      if (stayed && !state_.collided && !state_.offroad) return 1.0;
    }
    const double s_start = route_.project(start);
    double furthest = s_start;
    for (const auto& p : trace_) furthest = std::max(furthest, route_.project(p.position()));
    const double denom = route_len - s_start;
    if (denom <= 0) return 1.0;
    return std::clamp((furthest - s_start) / denom, 0.0, 1.0);
  }

 private:
  void advance_agents() {
    if (state_.agents.empty()) return;
    if (mode_ == AgentControlMode::Replay) {
      for (std::size_t i = 0; i < state_.agents.size(); ++i) {
        const auto& replay = sc_->agents[i].replay;
        const int idx = std::min<int>(state_.step + 1, static_cast<int>(replay.size()) - 1);
        if (idx >= 0 && !replay.empty()) state_.agents[i].pose = replay[idx];
      }
      return;
    }
    // IDM along each agent's path; leader = nearest entity ahead in lane
    for (std::size_t i = 0; i < state_.agents.size(); ++i) {
      const auto& track = sc_->agents[i];
      if (track.path.empty()) continue;
      Polyline path(track.path);
      auto& as = state_.agents[i];
      double gap = std::numeric_limits<double>::infinity();
      double leader_speed = 0;
      for (std::size_t j = 0; j < state_.agents.size(); ++j) {
        if (j == i) continue;
        const double sj = state_.agents[j].arc;
        if (sj <= as.arc) continue;
        const double g = sj - as.arc - (track.length + sc_->agents[j].length) / 2;
        if (g < gap) { gap = g; leader_speed = state_.agents[j].speed; }
      }
      // the ego counts as a leader when it is in this lane ahead of the agent
      {
        const double se = path.project(state_.ego.position());
        const Vec2 on_path = path.point_at(se);
        const double lateral = norm(state_.ego.position() - on_path);
        if (lateral < 2.5 && se > as.arc) {
          const double g = se - as.arc - (track.length + sc_->ego_length) / 2;
          if (g < gap) { gap = g; leader_speed = state_.ego_speed; }
        }
      }
      const double acc = idm_accel(as.speed, track.speed, gap, as.speed - leader_speed);
      as.speed = std::max(0.0, as.speed + acc * kDt);
      as.arc += as.speed * kDt;
      const Vec2 p = path.point_at(as.arc);
      as.pose = Pose2D(p.x, p.y, path.heading_at(std::min(as.arc, path.length() - 0.5)));
    }
  }

  void check_safety() {
    OrientedBox ego_box(state_.ego, sc_->ego_length, sc_->ego_width);
    if (!state_.collided) {
      for (std::size_t i = 0; i < state_.agents.size(); ++i) {
        OrientedBox abox(state_.agents[i].pose, sc_->agents[i].length, sc_->agents[i].width);
        if (boxes_overlap(ego_box, abox)) {
          state_.collided = true;
          state_.first_collision_step = state_.step;
          break;
        }
      }
    }
    if (!state_.offroad) {
      for (const auto& c : ego_box.corners())
        if (!road_.contains(c)) {
          state_.offroad = true;
          state_.first_offroad_step = state_.step;
          break;
        }
    }
  }

  const Scenario* sc_;
  Polygon road_;
  Polyline route_;
  AgentControlMode mode_;
  SimState state_;
  std::vector<Pose2D> trace_;
  bool arrived_ = false;
};

using Policy = std::function<EgoAction(const SimState&, const Scenario&)>;

inline EpisodeResult run_episode(const Scenario& sc, const Policy& policy,
                                 AgentControlMode mode = AgentControlMode::Replay) {
  Simulator sim(sc, mode);
  while (!sim.done()) sim.step(policy(sim.state(), sc));
  return sim.finish();
}

inline Policy expert_replay_policy() {
  return [](const SimState& st, const Scenario& sc) { return expert_action(sc, st.step); };
}

inline Policy stationary_policy() {
  return [](const SimState&, const Scenario&) { return EgoAction{0, 0, 0}; };
}

// ---- metrics ----

constexpr std::array<int, 5> kArrivalTaus = {95, 90, 85, 80, 75};
constexpr std::array<SceneType, 5> kAllSceneTypes = {
    SceneType::Stationary, SceneType::Straight, SceneType::TurnLeft, SceneType::TurnRight,
    SceneType::UTurn};

inline bool episode_safe(const EpisodeResult& r) { return !r.collided && !r.offroad; }

// percentage of episodes that traveled tau% of the route with no safety event
inline double arrival_rate(const std::vector<EpisodeResult>& results, int tau) {
  if (results.empty()) throw SimulatorError("arrival_rate on empty results");
  int ok = 0;
  for (const auto& r : results)
    if (episode_safe(r) && r.progress_ratio >= tau / 100.0) ++ok;
  return 100.0 * ok / static_cast<double>(results.size());
}

inline double arrival_rate_band(const std::vector<EpisodeResult>& results) {
  double s = 0;
  for (int tau : kArrivalTaus) s += arrival_rate(results, tau);
  return s / kArrivalTaus.size();
}

struct MetricsReport {
  std::map<SceneType, std::map<int, double>> per_type_ar;  // type -> tau -> AR
  std::map<SceneType, double> per_type_ar_band;            // type -> AR@[95:75]
  std::map<SceneType, int> per_type_count;
  double ar_band = 0;   // AR@[95:75] over all episodes
  double mar = 0;       // mean of per-type AR@[95:75]
  double offroad_rate = 0;
  double collision_rate = 0;
  double progress = 0;  // mean progress ratio, percent
  std::vector<std::string> warnings;
};

inline MetricsReport aggregate(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw SimulatorError("aggregate on empty results");
  MetricsReport rep;
  std::map<SceneType, std::vector<EpisodeResult>> by_type;
  int off = 0, col = 0;
  std::vector<double> progress_vals;
  for (const auto& r : results) {
    by_type[r.scene_type].push_back(r);
    if (r.offroad) ++off;
    if (r.collided) ++col;
    progress_vals.push_back(r.progress_ratio);
  }
  // summation in sorted order keeps the mean permutation-invariant
  std::sort(progress_vals.begin(), progress_vals.end());
  double prog = 0;
  for (double v : progress_vals) prog += v;
  rep.ar_band = arrival_rate_band(results);
  double mar_sum = 0;
  int mar_n = 0;
  for (SceneType t : kAllSceneTypes) {
    auto it = by_type.find(t);
    if (it == by_type.end()) {
      rep.per_type_count[t] = 0;
      rep.warnings.push_back(std::string("no episodes of type ") + scene_type_name(t) +
                             "; excluded from mAR");
      continue;
    }
    rep.per_type_count[t] = static_cast<int>(it->second.size());
    for (int tau : kArrivalTaus) rep.per_type_ar[t][tau] = arrival_rate(it->second, tau);
    rep.per_type_ar_band[t] = arrival_rate_band(it->second);
    mar_sum += rep.per_type_ar_band[t];
    ++mar_n;
  }
  rep.mar = mar_n > 0 ? mar_sum / mar_n : 0.0;
  rep.offroad_rate = 100.0 * off / static_cast<double>(results.size());
  rep.collision_rate = 100.0 * col / static_cast<double>(results.size());
  rep.progress = 100.0 * prog / static_cast<double>(results.size());
  return rep;
}

inline std::string metrics_table(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(14) << "metric" << std::right << std::setw(10) << "value" << "\n";
  os << std::left << std::setw(14) << "AR@[95:75]" << std::right << std::setw(10) << r.ar_band << "\n";
  os << std::left << std::setw(14) << "mAR@[95:75]" << std::right << std::setw(10) << r.mar << "\n";
  os << std::left << std::setw(14) << "OR" << std::right << std::setw(10) << r.offroad_rate << "\n";
  os << std::left << std::setw(14) << "CR" << std::right << std::setw(10) << r.collision_rate << "\n";
  os << std::left << std::setw(14) << "PR" << std::right << std::setw(10) << r.progress << "\n";
  for (SceneType t : kAllSceneTypes) {
    auto it = r.per_type_ar_band.find(t);
    if (it == r.per_type_ar_band.end()) continue;
    os << std::left << std::setw(14) << (std::string("AR.") + scene_type_name(t)) << std::right
       << std::setw(10) << it->second << "\n";
  }
  for (const auto& w : r.warnings) os << "# warning: " << w << "\n";
  return os.str();
}

inline std::string metrics_keyvalues(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "ar_band=" << r.ar_band << "\n";
  os << "mar=" << r.mar << "\n";
  os << "or=" << r.offroad_rate << "\n";
  os << "cr=" << r.collision_rate << "\n";
  os << "pr=" << r.progress << "\n";
  for (SceneType t : kAllSceneTypes) {
    auto it = r.per_type_ar_band.find(t);
    if (it == r.per_type_ar_band.end()) continue;
    os << "ar_band." << scene_type_name(t) << "=" << it->second << "\n";
    for (int tau : kArrivalTaus)
      os << "ar" << tau << "." << scene_type_name(t) << "="
         << r.per_type_ar.at(t).at(tau) << "\n";
  }
  return os.str();
}

// line-oriented episode log for the render command
inline std::string episode_log(const EpisodeResult& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# step x y yaw collided offroad\n";
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const bool col = r.first_collision_step >= 0 && static_cast<int>(i) > r.first_collision_step;
    const bool off = r.first_offroad_step >= 0 && static_cast<int>(i) > r.first_offroad_step;
    os << i << " " << r.trace[i].x << " " << r.trace[i].y << " " << r.trace[i].yaw << " "
       << (col || (r.collided && i + 1 == r.trace.size())) << " "
       << (off || (r.offroad && i + 1 == r.trace.size())) << "\n";
  }
  return os.str();
}

}  // namespace latentplan
