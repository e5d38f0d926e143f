#pragma once

// Object-centric observation construction (ego-frame, FOV-filtered segment
// vectors) and the bidirectional transformer scene encoder.

#include <algorithm>
#include <cmath>
#include <vector>

#include "latentplan/config.hpp"
#include "latentplan/nn.hpp"
#include "latentplan/simulator.hpp"

namespace latentplan {

// Segment kind codes stored in attribute 0.
constexpr double kSegEgo = 0.0;
constexpr double kSegAgent = 1.0;
constexpr double kSegRoute = 2.0;

// 6 attributes: kind, x, y, heading, speed-or-arclen, extent-or-halfwidth.
struct SegmentVector {
  double kind = 0, x = 0, y = 0, heading = 0, attr5 = 0, attr6 = 0;
};

struct Observation {
  std::vector<SegmentVector> segments;  // fixed size n_max; invalid slots zeroed
  std::vector<bool> valid;
};

// Ego always occupies slot 0. Agents and ~route_seg_len route pieces are
// expressed in the ego frame; anything outside the fov_w x fov_h window is
// dropped. On overflow the nearest entries win, ties broken by build order.
inline Observation build_observation(const SimState& state, const Scenario& sc,
                                     const Config& cfg) {
  struct Candidate {
    SegmentVector seg;
    double dist;
    int order;
  };
  std::vector<Candidate> cands;
  const double half_w = cfg.fov_w / 2, half_h = cfg.fov_h / 2;
  auto in_fov = [&](double x, double y) {
    return std::fabs(x) <= half_w && std::fabs(y) <= half_h;
  };
  int order = 0;
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    const AgentState& ag = state.agents[i];
    const Vec2 local = state.ego.to_local(ag.pose.position());
    if (!in_fov(local.x, local.y)) continue;
    SegmentVector s;
    s.kind = kSegAgent;
    s.x = local.x;
    s.y = local.y;
    s.heading = wrap_angle(ag.pose.yaw - state.ego.yaw);
    s.attr5 = ag.speed;
    s.attr6 = i < sc.agents.size() ? sc.agents[i].length : 4.5;
    cands.push_back({s, std::hypot(local.x, local.y), order++});
  }
  const Polyline route = sc.route_line();
  const double total = route.length();
  const int pieces = std::max(1, static_cast<int>(std::ceil(total / cfg.route_seg_len)));
  const double ds = total / pieces;
  for (int i = 0; i < pieces; ++i) {
    const double s0 = i * ds, s1 = (i + 1) * ds;
    const Vec2 a = route.point_at(s0), b = route.point_at(s1);
    const Vec2 mid_world{(a.x + b.x) / 2, (a.y + b.y) / 2};
    const Vec2 mid = state.ego.to_local(mid_world);
    if (!in_fov(mid.x, mid.y)) continue;
    SegmentVector s;
    s.kind = kSegRoute;
    s.x = mid.x;
    s.y = mid.y;
    s.heading = wrap_angle(std::atan2(b.y - a.y, b.x - a.x) - state.ego.yaw);
    s.attr5 = s1 - s0;
    s.attr6 = kLaneHalfWidth;
    cands.push_back({s, std::hypot(mid.x, mid.y), order++});
  }
  if (static_cast<int>(cands.size()) > cfg.n_max - 1) {
    // overflow: keep the nearest, then restore build order so slot layout
    // stays stable under tiny distance perturbations
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });
    cands.resize(cfg.n_max - 1);
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.order < b.order; });
  }

  Observation obs;
  obs.segments.assign(cfg.n_max, SegmentVector{});
  obs.valid.assign(cfg.n_max, false);
  SegmentVector ego;
  ego.kind = kSegEgo;
  ego.attr5 = state.ego_speed;
  ego.attr6 = sc.ego_length;
  obs.segments[0] = ego;
  obs.valid[0] = true;
  int slot = 1;
  for (const Candidate& c : cands) {
    if (slot >= cfg.n_max) break;
    obs.segments[slot] = c.seg;
    obs.valid[slot] = true;
    ++slot;
  }
  return obs;
}

struct EncodedScene {
  Tensor class_token;  // 1 x D
  Tensor env_tokens;   // n_max x D
  std::vector<bool> valid;

  // class + env tokens as one memory block for downstream cross-attention
  Tensor memory() const { return concat_rows({class_token, env_tokens}); }
  std::vector<bool> memory_valid() const {
    std::vector<bool> v;
    v.reserve(valid.size() + 1);
    v.push_back(true);
    v.insert(v.end(), valid.begin(), valid.end());
    return v;
  }
};

// Linear embed of the 6 attributes, learned class token prepended, then
// bidirectional pre-norm transformer layers with key-padding masks so padded
// slots never influence valid outputs.
class Encoder {
 public:
  Encoder(ParamStore& ps, const Config& cfg) : cfg_(cfg) {
    embed_ = Linear(ps, "enc.embed", 6, cfg.dim);
    cls_ = ps.normal("enc.cls", {1, cfg.dim});
    const int hidden = cfg.dim * cfg.ffn_mult;
    for (int i = 0; i < cfg.enc_layers; ++i)
      layers_.emplace_back(ps, "enc.layer" + std::to_string(i), cfg.dim, cfg.enc_heads, hidden);
    ln_f_ = LayerNorm(ps, "enc.ln_f", cfg.dim);
  }

  EncodedScene operator()(const Observation& obs) const {
    const int n = cfg_.n_max;
    if (static_cast<int>(obs.segments.size()) != n ||
        static_cast<int>(obs.valid.size()) != n)
      throw TensorError("observation size does not match configured slot count");
    std::vector<double> raw(static_cast<std::size_t>(n) * 6, 0.0);
    for (int i = 0; i < n; ++i) {
      if (!obs.valid[i]) continue;
      const SegmentVector& s = obs.segments[i];
      raw[i * 6 + 0] = s.kind;
      raw[i * 6 + 1] = s.x;
      raw[i * 6 + 2] = s.y;
      raw[i * 6 + 3] = s.heading;
      raw[i * 6 + 4] = s.attr5;
      raw[i * 6 + 5] = s.attr6;
    }
    Tensor x = Tensor::from_values({n, 6}, raw);
    Tensor seq = concat_rows({cls_, embed_(x)});
    std::vector<bool> key_valid;
    key_valid.reserve(n + 1);
    key_valid.push_back(true);
    key_valid.insert(key_valid.end(), obs.valid.begin(), obs.valid.end());
    AttnMask mask = key_padding_mask(n + 1, key_valid);
    for (const auto& layer : layers_) seq = layer(seq, &mask);
    seq = ln_f_(seq);
    EncodedScene out;
    out.class_token = slice_rows(seq, 0, 1);
    out.env_tokens = slice_rows(seq, 1, n + 1);
    out.valid = obs.valid;
    return out;
  }

 private:
  Config cfg_;
  Linear embed_;
  Tensor cls_;
  std::vector<TransformerLayer> layers_;
  LayerNorm ln_f_;
};

}  // namespace latentplan
