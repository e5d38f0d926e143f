#include <cmath>

#include "doctest.h"
#include "latentplan/encoder.hpp"
#include "support/gradcheck.hpp"

using namespace latentplan;

namespace {

Scenario straight_scenario(double route_len = 60.0) {
  Scenario sc;
  sc.id = "enc_straight";
  sc.scene_type = SceneType::Straight;
  sc.centerline = {{0, 0}, {100, 0}};
  sc.route = {{0, 0}, {route_len, 0}};
  sc.road_polygon = {{-10, -3.5}, {110, -3.5}, {110, 3.5}, {-10, 3.5}};
  for (int i = 0; i < kTrajectoryLen; ++i)
    sc.expert.emplace_back(route_len * i / (kTrajectoryLen - 1.0), 0.0, 0.0);
  return sc;
}

SimState initial_state(const Scenario& sc) {
  SimState st;
  st.ego = sc.expert.front();
  for (const auto& a : sc.agents) st.agents.push_back({a.initial, a.speed, 0.0});
  return st;
}

Config small_cfg() {
  Config cfg = Config::desk();
  cfg.n_max = 16;
  return cfg;
}

}  // namespace

TEST_CASE("build_observation: ego slot, FOV filter, agent attributes") {
  Config cfg = small_cfg();
  Scenario sc = straight_scenario();
  AgentTrack near_agent;
  near_agent.initial = Pose2D(20, 1, 0.3);
  near_agent.speed = 7.5;
  near_agent.length = 5.1;
  sc.agents.push_back(near_agent);
  AgentTrack far_agent;  // ego-frame (100, 0): outside w_f = 80
  far_agent.initial = Pose2D(100, 0, 0);
  sc.agents.push_back(far_agent);

  SimState st = initial_state(sc);
  st.ego_speed = 4.0;
  Observation obs = build_observation(st, sc, cfg);

  CHECK(obs.valid[0]);
  CHECK(obs.segments[0].kind == kSegEgo);
  CHECK(obs.segments[0].x == 0.0);
  CHECK(obs.segments[0].attr5 == 4.0);

  int agents = 0, routes = 0;
  for (int i = 1; i < cfg.n_max; ++i) {
    if (!obs.valid[i]) continue;
    if (obs.segments[i].kind == kSegAgent) {
      ++agents;
      CHECK(obs.segments[i].x == doctest::Approx(20.0));
      CHECK(obs.segments[i].y == doctest::Approx(1.0));
      CHECK(obs.segments[i].heading == doctest::Approx(0.3));
      CHECK(obs.segments[i].attr5 == doctest::Approx(7.5));
      CHECK(obs.segments[i].attr6 == doctest::Approx(5.1));
    } else {
      ++routes;
      CHECK(obs.segments[i].kind == kSegRoute);
      CHECK(std::fabs(obs.segments[i].x) <= cfg.fov_w / 2);
      CHECK(obs.segments[i].attr6 == doctest::Approx(kLaneHalfWidth));
    }
  }
  CHECK(agents == 1);  // the far agent is dropped
  CHECK(routes > 0);
}

TEST_CASE("build_observation is invariant to rigid world-frame motion") {
  Config cfg = small_cfg();
  Scenario sc = straight_scenario();
  AgentTrack ag;
  ag.initial = Pose2D(15, -2, 0.2);
  ag.speed = 3;
  sc.agents.push_back(ag);
  SimState st = initial_state(sc);
  st.ego = Pose2D(10, 0.5, 0.1);
  st.ego_speed = 2;
  Observation base = build_observation(st, sc, cfg);

  const double th = 1.1, tx = -30, ty = 12;
  const double c = std::cos(th), s = std::sin(th);
  auto move_pt = [&](Vec2 p) { return Vec2{c * p.x - s * p.y + tx, s * p.x + c * p.y + ty}; };
  auto move_pose = [&](Pose2D p) {
    Vec2 q = move_pt(p.position());
    return Pose2D(q.x, q.y, wrap_angle(p.yaw + th));
  };
  Scenario moved = sc;
  for (auto& p : moved.route) p = move_pt(p);
  for (auto& p : moved.centerline) p = move_pt(p);
  moved.agents[0].initial = move_pose(sc.agents[0].initial);
  SimState mst = initial_state(moved);
  mst.ego = move_pose(st.ego);
  mst.ego_speed = st.ego_speed;
  Observation rot = build_observation(mst, moved, cfg);

  REQUIRE(rot.valid == base.valid);
  for (int i = 0; i < cfg.n_max; ++i) {
    CHECK(rot.segments[i].x == doctest::Approx(base.segments[i].x).epsilon(1e-9));
    CHECK(rot.segments[i].y == doctest::Approx(base.segments[i].y).epsilon(1e-9));
    CHECK(rot.segments[i].heading ==
          doctest::Approx(base.segments[i].heading).epsilon(1e-9));
  }
}

TEST_CASE("observation overflow keeps the nearest segments, ego first") {
  Config cfg = small_cfg();
  cfg.n_max = 4;
  Scenario sc = straight_scenario(70.0);
  SimState st = initial_state(sc);
  Observation obs = build_observation(st, sc, cfg);
  CHECK(obs.segments[0].kind == kSegEgo);
  for (int i = 1; i < cfg.n_max; ++i) {
    REQUIRE(obs.valid[i]);
    CHECK(obs.segments[i].x <= 15.0);  // only the closest route pieces survive
  }
  // deterministic
  Observation again = build_observation(st, sc, cfg);
  for (int i = 0; i < cfg.n_max; ++i) CHECK(obs.segments[i].x == again.segments[i].x);
}

TEST_CASE("encode output shapes at full width") {
  Config cfg;  // defaults: D=256, n_max=64, 4 layers
  ParamStore ps(1);
  Encoder enc(ps, cfg);
  Scenario sc = straight_scenario();
  SimState st = initial_state(sc);
  EncodedScene out = enc(build_observation(st, sc, cfg));
  CHECK(out.class_token.rows() == 1);
  CHECK(out.class_token.cols() == 256);
  CHECK(out.env_tokens.rows() == 64);
  CHECK(out.env_tokens.cols() == 256);
}

TEST_CASE("padded slots never influence valid outputs") {
  Config cfg = small_cfg();
  ParamStore ps(2);
  Encoder enc(ps, cfg);
  Scenario sc = straight_scenario();
  SimState st = initial_state(sc);
  Observation obs = build_observation(st, sc, cfg);

  // garbage in a masked slot is inert
  Observation dirty = obs;
  int pad = -1;
  for (int i = 0; i < cfg.n_max; ++i)
    if (!obs.valid[i]) { pad = i; break; }
  REQUIRE(pad >= 0);
  dirty.segments[pad] = SegmentVector{1, 99, 99, 1, 50, 50};
  EncodedScene a = enc(obs), b = enc(dirty);
  for (std::size_t i = 0; i < a.env_tokens.values().size(); ++i)
    CHECK(std::fabs(a.env_tokens.values()[i] - b.env_tokens.values()[i]) < 1e-9);

  // unmasking that same slot (even zero-filled) does change the output
  Observation extra = obs;
  extra.valid[pad] = true;
  EncodedScene c = enc(extra);
  double diff = 0;
  for (std::size_t i = 0; i < a.class_token.values().size(); ++i)
    diff = std::max(diff, std::fabs(a.class_token.values()[i] - c.class_token.values()[i]));
  CHECK(diff > 1e-9);
}

TEST_CASE("permutation equivariance over segments") {
  Config cfg = small_cfg();
  ParamStore ps(3);
  Encoder enc(ps, cfg);
  Scenario sc = straight_scenario();
  AgentTrack ag;
  ag.initial = Pose2D(12, 2, 0.4);
  ag.speed = 5;
  sc.agents.push_back(ag);
  SimState st = initial_state(sc);
  Observation obs = build_observation(st, sc, cfg);

  int i = 1, j = 3;
  REQUIRE(obs.valid[i]);
  REQUIRE(obs.valid[j]);
  Observation swapped = obs;
  std::swap(swapped.segments[i], swapped.segments[j]);

  EncodedScene a = enc(obs), b = enc(swapped);
  const int d = cfg.dim;
  auto row = [&](const EncodedScene& e, int r, int k) { return e.env_tokens.values()[r * d + k]; };
  for (int k = 0; k < d; ++k) {
    CHECK(std::fabs(row(a, i, k) - row(b, j, k)) < 1e-9);
    CHECK(std::fabs(row(a, j, k) - row(b, i, k)) < 1e-9);
    CHECK(std::fabs(a.class_token.values()[k] - b.class_token.values()[k]) < 1e-9);
  }
}

TEST_CASE("encoder gradients match finite differences") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Config cfg = Config::desk();
    cfg.dim = 8;
    cfg.enc_layers = 1;
    cfg.enc_heads = 2;
    cfg.n_max = 3;
    cfg.ffn_mult = 2;
    ParamStore ps(seed);
    Encoder enc(ps, cfg);
    Observation obs;
    obs.segments.assign(cfg.n_max, SegmentVector{});
    obs.valid = {true, true, false};
    obs.segments[1] = SegmentVector{2, 3.5, -1, 0.2, 5, 3.5};
    auto forward = [&] {
      EncodedScene out = enc(obs);
      return sum_all(mul(out.memory(), out.memory()));
    };
    ps.zero_grad();
    backward(forward());
    CHECK(lp_test::max_grad_rel_error(ps, [&] { return forward().item(); }) < 1e-4);
  }
}
