#pragma once

// Joint imitation-learning loop: the planner is trained on expert
// demonstrations while the world model learns latent dynamics from the
// planner's own intermediate action estimates (never the ground truth), plus
// closed-loop evaluation of the trained policy in the simulator.

#include <atomic>
#include <deque>
#include <ostream>
#include <thread>

#include "latentplan/checkpoint.hpp"
#include "latentplan/optim.hpp"
#include "latentplan/planner.hpp"

namespace latentplan {

class TrainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything that shares the parameter store.
struct Model {
  Config cfg;
  ParamStore ps;
  Encoder encoder;
  Adapter adapter;
  WorldModel lwm;
  Planner planner;

  explicit Model(const Config& c)
      : cfg(c), ps(c.seed), encoder(ps, c), adapter(ps, c), lwm(ps, c), planner(ps, c) {}
};

// Per-episode planning state: a ring buffer of the executed actions and
// latent states from the previous context_steps-1 steps. Forward passes are
// const on the model, so independent contexts may run in parallel. Inference
// uses the latent distribution means: the reparameterized draws exist to
// train the distributions, and injecting their noise into the control loop
// only adds rollout variance.
class PlanContext {
 public:
  PlanContext(const Model& m, std::uint64_t episode_seed) : m_(&m), rng_(episode_seed) {}

  EgoAction plan(const SimState& st, const Scenario& sc) {
    const Config& cfg = m_->cfg;
    Observation obs = build_observation(st, sc, cfg);
    EncodedScene enc = m_->encoder(obs);
    LatentDist s_hat = m_->adapter.adapt_state(enc);
    Tensor s_sample = s_hat.mean;
    Tensor memory = enc.memory();
    std::vector<bool> valid = enc.memory_valid();

    const int I = cfg.intermediate_layer, J = cfg.planner_layers;
    auto head = m_->planner.run_layers(0, I, m_->planner.initial_queries(), nullptr, memory, valid);

    Tensor tail_memory = memory;
    std::vector<bool> tail_valid = valid;
    if (cfg.use_lwm) {
      Tensor a_prime = sample_action_tensor(head.back().dist);
      std::vector<Tensor> actions, states;
      for (const Tensor& a : past_actions_) actions.push_back(a);
      for (const Tensor& s : past_latents_) states.push_back(s);
      actions.push_back(m_->adapter.adapt_action(a_prime));
      states.push_back(s_sample);
      auto predicted = m_->lwm.predict_next(actions, states);
      Tensor latent = predicted.back().mean;
      tail_memory = concat_rows({memory, latent});
      tail_valid.insert(tail_valid.end(), cfg.latent_tokens, true);
    }
    auto tail = m_->planner.run_layers(I, J, head.back().q, &head.back().dist, tail_memory,
                                       tail_valid);
    EgoAction a = sample_action(tail.back().dist);

    // roll the context window: executed action + this step's latent sample
    if (cfg.context_steps > 1) {
      past_actions_.push_back(detach(m_->adapter.adapt_action(a)));
      past_latents_.push_back(detach(s_sample));
      while (static_cast<int>(past_actions_.size()) > cfg.context_steps - 1) {
        past_actions_.pop_front();
        past_latents_.pop_front();
      }
    }
    return a;
  }

 private:
  const Model* m_;
  std::mt19937_64 rng_;
  std::deque<Tensor> past_actions_;  // executed actions, tokenized, detached
  std::deque<Tensor> past_latents_;
};

struct TrainingSample {
  Observation obs_prev, obs_cur;
  EgoAction a_prev, a_cur;
  std::string scenario_id;
  int step = 0;  // index of the "current" pose in the expert trajectory
  double ego_length = kEgoLength, ego_width = kEgoWidth;
};

// Expert-driven world state at pose index i (agents follow their logs).
inline SimState expert_state_at(const Scenario& sc, int i) {
  SimState st;
  st.step = i;
  st.ego = sc.expert[i];
  if (i > 0) {
    const EgoAction d = expert_action(sc, i - 1);
    st.ego_speed = std::hypot(d.dx, d.dy) / kDt;
  }
  for (const auto& track : sc.agents) {
    const Pose2D pose =
        track.replay.empty() ? track.initial
                             : track.replay[std::min<std::size_t>(i, track.replay.size() - 1)];
    st.agents.push_back({pose, track.speed, 0.0});
  }
  return st;
}

// One sample per trajectory position that has both a history step and a next
// pose: an 80-pose trajectory yields 78 samples.
inline std::vector<TrainingSample> extract_samples(const Scenario& sc, const Config& cfg) {
  std::vector<TrainingSample> out;
  const int n = static_cast<int>(sc.expert.size());
  for (int t = 1; t + 1 < n; ++t) {
    TrainingSample s;
    s.obs_prev = build_observation(expert_state_at(sc, t - 1), sc, cfg);
    s.obs_cur = build_observation(expert_state_at(sc, t), sc, cfg);
    s.a_prev = expert_action(sc, t - 1);
    s.a_cur = expert_action(sc, t);
    s.scenario_id = sc.id;
    s.step = t;
    s.ego_length = sc.ego_length;
    s.ego_width = sc.ego_width;
    out.push_back(std::move(s));
  }
  return out;
}

// Recovery-augmented extraction. On top of the base samples, each trajectory
// position contributes (in expectation) `perturb_prob` extra samples whose
// ego pose is pushed off the expert pose; the label steers back so that a
// `perturb_recovery` fraction of the offset is removed over the next step.
inline std::vector<TrainingSample> extract_samples(const Scenario& sc, const Config& cfg,
                                                   std::mt19937_64& rng) {
  std::vector<TrainingSample> out = extract_samples(sc, cfg);
  if (cfg.perturb_prob <= 0.0) return out;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> ux(-cfg.perturb_dx, cfg.perturb_dx);
  std::uniform_real_distribution<double> uy(-cfg.perturb_dy, cfg.perturb_dy);
  std::uniform_real_distribution<double> uw(-cfg.perturb_dyaw, cfg.perturb_dyaw);
  const int n = static_cast<int>(sc.expert.size());
  auto pose_delta = [](const Pose2D& from, const Pose2D& to) {
    const Vec2 local = from.to_local(to.position());
    return EgoAction{local.x, local.y, wrap_angle(to.yaw - from.yaw)};
  };
  for (int t = 1; t + 1 < n; ++t) {
    for (double left = cfg.perturb_prob; left > 0.0 && u01(rng) < left; left -= 1.0) {
      const double ox = ux(rng), oy = uy(rng), oyaw = uw(rng);
      const Pose2D off = sc.expert[t].compose(ox, oy, oyaw);
      const double keep = 1.0 - cfg.perturb_recovery;
      // Longitudinal offsets recover only toward a parked expert: a moving
      // expert's path is longitudinally invariant, so the label keeps the
      // along-track shift and corrects the cross-track and heading errors. A
      // parked expert defines a unique target point, so everything recovers.
      const double keep_x = sc.scene_type == SceneType::Stationary ? keep : 1.0;
      const Pose2D target = sc.expert[t + 1].compose(keep_x * ox, keep * oy, keep * oyaw);
      TrainingSample s;
      s.obs_prev = build_observation(expert_state_at(sc, t - 1), sc, cfg);
      s.a_prev = pose_delta(sc.expert[t - 1], off);
      // speed-axis recovery: pretend the ego arrived at this pose slower or
      // faster than the expert while the label keeps the expert's pace, so the
      // scenario's cruise speed becomes an attractor instead of a knife edge.
      // The scale is applied to the action history and the observed speed
      // together to keep the two channels consistent.
      if (cfg.perturb_speed > 0.0) {
        const double scale = 1.0 + cfg.perturb_speed * (2.0 * u01(rng) - 1.0);
        s.a_prev.dx *= scale;
        s.a_prev.dy *= scale;
      }
      SimState st = expert_state_at(sc, t);
      st.ego = off;
      st.ego_speed = std::hypot(s.a_prev.dx, s.a_prev.dy) / kDt;
      s.obs_cur = build_observation(st, sc, cfg);
      s.a_cur = pose_delta(off, target);
      s.scenario_id = sc.id;
      s.step = t;
      s.ego_length = sc.ego_length;
      s.ego_width = sc.ego_width;
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct StepStats {
  double l_world = 0;
  double l_gmm = 0;
  double total = 0;
  // the per-sample current-step action fed into the world model (diagnostic:
  // must never equal the ground truth unless naive mode is on)
  std::vector<EgoAction> lwm_actions;
};

// Loss graph for one sample; gradients accumulate scaled by `weight`.
// Returns {L_world, L_gmm} values and reports the world-model input action.
inline std::pair<double, double> sample_loss_backward(const Model& m, const TrainingSample& s,
                                                      std::mt19937_64& rng, double weight,
                                                      EgoAction* lwm_action_out) {
  const Config& cfg = m.cfg;
  const int I = cfg.intermediate_layer, J = cfg.planner_layers;

  EncodedScene enc_prev = m.encoder(s.obs_prev);
  EncodedScene enc_cur = m.encoder(s.obs_cur);

  auto head_cur = m.planner.run_layers(0, I, m.planner.initial_queries(), nullptr,
                                       enc_cur.memory(), enc_cur.memory_valid());

  Tensor l_world = Tensor::scalar(0.0);
  Tensor tail_memory = enc_cur.memory();
  std::vector<bool> tail_valid = enc_cur.memory_valid();
  if (cfg.use_lwm) {
    LatentDist s_hat_prev = m.adapter.adapt_state(enc_prev);
    LatentDist s_hat_cur = m.adapter.adapt_state(enc_cur);

    Tensor a_prime_prev, a_prime_cur;
    if (cfg.naive_lwm) {
      // ablation: ground-truth actions leak into the world model
      a_prime_prev = Tensor::from_values({1, 3}, {s.a_prev.dx, s.a_prev.dy, s.a_prev.dyaw});
      a_prime_cur = Tensor::from_values({1, 3}, {s.a_cur.dx, s.a_cur.dy, s.a_cur.dyaw});
    } else {
      auto head_prev = m.planner.run_layers(0, I, m.planner.initial_queries(), nullptr,
                                            enc_prev.memory(), enc_prev.memory_valid());
      a_prime_prev = sample_action_tensor(head_prev.back().dist);
      a_prime_cur = sample_action_tensor(head_cur.back().dist);
    }
    if (lwm_action_out)
      *lwm_action_out = {a_prime_cur.values()[0], a_prime_cur.values()[1],
                         a_prime_cur.values()[2]};

    std::vector<Tensor> actions = {m.adapter.adapt_action(a_prime_prev),
                                   m.adapter.adapt_action(a_prime_cur)};
    std::vector<Tensor> states = {s_hat_prev.sample(rng), s_hat_cur.sample(rng)};
    auto predicted = m.lwm.predict_next(actions, states);
    // prediction made at the previous step vs. what the adapter actually saw
    l_world = kl_gaussian(s_hat_cur, predicted.front());

    Tensor latent = predicted.back().sample(rng);
    if (cfg.detach_latent) latent = detach(latent);
    tail_memory = concat_rows({enc_cur.memory(), latent});
    tail_valid.insert(tail_valid.end(), cfg.latent_tokens, true);
  }

  auto tail = m.planner.run_layers(I, J, head_cur.back().q, &head_cur.back().dist, tail_memory,
                                   tail_valid);

  Tensor l_gmm = Tensor::scalar(0.0);
  auto add_layer_loss = [&](const MixtureActionDistribution& dist) {
    LabelAssignment la = assign_labels(dist, s.a_cur, s.ego_length, s.ego_width);
    l_gmm = add(l_gmm, gmm_nll(dist, s.a_cur, la));
  };
  for (const auto& layer : head_cur) add_layer_loss(layer.dist);
  for (const auto& layer : tail) add_layer_loss(layer.dist);
  l_gmm = scale(l_gmm, 1.0 / J);

  Tensor total = add(scale(l_world, cfg.world_weight), l_gmm);
  backward(scale(total, weight));
  return {l_world.item(), l_gmm.item()};
}

// One optimizer update over a batch. Throws on non-finite losses with a
// diagnostic dump of the offending sample ids and gradient norm.
inline StepStats train_step(Model& m, const std::vector<const TrainingSample*>& batch,
                            Adam& opt, double lr, std::mt19937_64& rng) {
  if (batch.empty()) throw TrainerError("train_step: empty batch");
  m.ps.zero_grad();
  StepStats stats;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const TrainingSample* s : batch) {
    EgoAction lwm_action{0, 0, 0};
    auto [lw, lg] = sample_loss_backward(m, *s, rng, w, &lwm_action);
    if (!std::isfinite(lw) || !std::isfinite(lg)) {
      std::ostringstream os;
      os << "non-finite loss (L_world=" << lw << ", L_gmm=" << lg << ") at sample "
         << s->scenario_id << "#" << s->step << "; grad norm " << m.ps.grad_norm()
         << "; batch:";
      for (const TrainingSample* b : batch) os << ' ' << b->scenario_id << '#' << b->step;
      throw TrainerError(os.str());
    }
    stats.l_world += lw * w;
    stats.l_gmm += lg * w;
    stats.lwm_actions.push_back(lwm_action);
  }
  stats.total = m.cfg.world_weight * stats.l_world + stats.l_gmm;
  if (m.cfg.clip_norm > 0) clip_grad_norm(m.ps, m.cfg.clip_norm);
  opt.set_lr(lr);
  opt.step();
  return stats;
}

struct TrainResult {
  int steps = 0;
  double final_total = 0;
  std::vector<double> epoch_totals;
};

// Epochs over shuffled samples with cosine-decayed learning rate. Logs one
// line per step: `step, lr, L_world, L_gmm, total`. Checkpoints per epoch
// when a directory is given.
inline TrainResult train(Model& m, const std::vector<TrainingSample>& samples, std::ostream* log,
                         const std::string& ckpt_dir = "") {
  if (samples.empty()) throw TrainerError("train: no samples");
  const Config& cfg = m.cfg;
  Adam opt(m.ps, cfg.lr0);
  std::mt19937_64 rng(cfg.seed);
  const int per_epoch =
      static_cast<int>((samples.size() + cfg.batch - 1) / static_cast<std::size_t>(cfg.batch));
  const int total_steps = per_epoch * cfg.epochs;
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::vector<const TrainingSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i)
        batch.push_back(&samples[order[i]]);
      double lr = cosine_lr(step, total_steps, cfg.lr0);
      if (cfg.warmup_steps > 0) lr *= std::min(1.0, (step + 1.0) / cfg.warmup_steps);
      StepStats st = train_step(m, batch, opt, lr, rng);
      if (log)
        *log << step << ", " << lr << ", " << st.l_world << ", " << st.l_gmm << ", "
             << st.total << "\n";
      epoch_total += st.total;
      ++epoch_steps;
      ++step;
      result.final_total = st.total;
    }
    result.epoch_totals.push_back(epoch_total / std::max(1, epoch_steps));
    if (!ckpt_dir.empty())
      save_checkpoint(m.ps, ckpt_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
  }
  result.steps = step;
  return result;
}

// Closed-loop rollout of the trained policy on one scenario.
inline EpisodeResult rollout_episode(const Model& m, const Scenario& sc,
                                     std::uint64_t episode_seed,
                                     AgentControlMode agents = AgentControlMode::Replay) {
  PlanContext ctx(m, episode_seed);
  Policy policy = [&ctx](const SimState& st, const Scenario& s) { return ctx.plan(st, s); };
  return run_episode(sc, policy, agents);
}

// Deterministic parallel evaluation: per-episode seeds derive from the master
// seed and the scenario index, results are folded in scenario order.
inline std::vector<EpisodeResult> evaluate_closed_loop(
    const Model& m, const std::vector<Scenario>& scenarios, std::uint64_t seed,
    AgentControlMode agents = AgentControlMode::Replay, int workers = 0) {
  std::vector<EpisodeResult> results(scenarios.size());
  if (workers <= 0)
    workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, std::max<std::size_t>(1, scenarios.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < scenarios.size(); i = next.fetch_add(1))
      results[i] = rollout_episode(m, scenarios[i], seed * 1000003 + i, agents);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace latentplan
