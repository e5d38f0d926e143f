#pragma once

// Multi-modal planner head: stacked attention blocks over K action queries,
// each emitting a mixture distribution (correlated bivariate Gaussian over
// dx,dy + Laplace over dyaw), with detection-style positive selection via
// rotated-box IoU and the corresponding negative log-likelihood loss.

#include <cmath>
#include <vector>

#include "latentplan/worldmodel.hpp"

namespace latentplan {

constexpr double kRhoBound = 1.0 - 1e-6;

// K mixture components; all tensors differentiable views of the head outputs.
struct MixtureActionDistribution {
  Tensor logits;  // K x 1
  Tensor probs;   // K x 1, softmax over components
  Tensor mu;      // K x 2 (dx, dy), clamped to +/- action_clamp
  Tensor sigma;   // K x 2, softplus + sigma_min
  Tensor rho;     // K x 1, tanh-bounded
  Tensor mu_yaw;  // K x 1, Laplace location (scale fixed at 1)

  int components() const { return logits.rows(); }

  // K x 7 rows [p, mu_x, mu_y, sigma_x, sigma_y, rho, mu_yaw]; used both as
  // the next layer's query position embedding input and for inspection
  Tensor embed_rows() const { return concat_cols({probs, mu, sigma, rho, mu_yaw}); }
};

// argmax-probability component, lowest index on ties; the action is the
// selected component's expectation (sigma and rho play no role)
inline int argmax_component(const MixtureActionDistribution& d) {
  const auto& p = d.probs.values();
  int best = 0;
  for (int k = 1; k < d.components(); ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

inline EgoAction sample_action(const MixtureActionDistribution& d) {
  const int k = argmax_component(d);
  return {d.mu.values()[k * 2 + 0], d.mu.values()[k * 2 + 1], d.mu_yaw.values()[k]};
}

// differentiable 1 x 3 version of sample_action (selection index is constant)
inline Tensor sample_action_tensor(const MixtureActionDistribution& d) {
  const int k = argmax_component(d);
  return concat_cols({slice_rows(d.mu, k, k + 1), slice_rows(d.mu_yaw, k, k + 1)});
}

struct LabelAssignment {
  std::vector<int> label;  // +1 positive, -1 negative, 0 ignore
  std::vector<double> iou;
  int best = 0;  // max-IoU component, always positive

  std::vector<int> positives() const {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(label.size()); ++k)
      if (label[k] > 0) out.push_back(k);
    return out;
  }
};

constexpr double kIouPositive = 0.7;
constexpr double kIouNegative = 0.3;

// Roll each component's mean action into a next-pose box (ego extent) and
// compare with the ground-truth next pose by rotated IoU.
inline LabelAssignment assign_labels(const MixtureActionDistribution& d, const EgoAction& gt,
                                     double ego_length, double ego_width) {
  const Pose2D origin(0, 0, 0);
  const Pose2D gt_pose = origin.compose(gt.dx, gt.dy, gt.dyaw);
  const OrientedBox gt_box(gt_pose, ego_length, ego_width);
  LabelAssignment out;
  const int K = d.components();
  out.label.assign(K, 0);
  out.iou.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    const Pose2D pose =
        origin.compose(d.mu.values()[k * 2], d.mu.values()[k * 2 + 1], d.mu_yaw.values()[k]);
    out.iou[k] = rotated_iou(OrientedBox(pose, ego_length, ego_width), gt_box);
    if (out.iou[k] > out.iou[out.best]) out.best = k;
    if (out.iou[k] > kIouPositive) out.label[k] = 1;
    else if (out.iou[k] < kIouNegative) out.label[k] = -1;
  }
  out.label[out.best] = 1;
  return out;
}

namespace detail {

// log softmax-probability of component k, numerically stable
inline Tensor log_prob_component(const Tensor& logits, int k) {
  double m = logits.values()[0];
  for (double v : logits.values()) m = std::max(m, v);
  Tensor lse = add_scalar(log_t(sum_all(exp_t(add_scalar(logits, -m)))), m);
  return sub(slice_rows(logits, k, k + 1), reshape(lse, {1, 1}));
}

}  // namespace detail

// Negative log-likelihood of the ground-truth action under the mixture,
// averaged over positive components: -log p_s - log N_s(dx,dy) - log
// Laplace_s(dyaw, 1). Probabilities are softmax-normalized over all K
// components, so negatives are suppressed through the normalizer.
inline Tensor gmm_nll(const MixtureActionDistribution& d, const EgoAction& gt,
                      const LabelAssignment& labels) {
  const auto pos = labels.positives();
  if (pos.empty()) throw TensorError("gmm_nll: no positive components");
  Tensor total = Tensor::scalar(0.0);
  for (int k : pos) {
    Tensor log_p = detail::log_prob_component(d.logits, k);
    Tensor mu = slice_rows(d.mu, k, k + 1);
    Tensor sx = slice_cols(slice_rows(d.sigma, k, k + 1), 0, 1);
    Tensor sy = slice_cols(slice_rows(d.sigma, k, k + 1), 1, 2);
    Tensor r = slice_rows(d.rho, k, k + 1);
    Tensor dx = sub(Tensor::from_values({1, 1}, {gt.dx}), slice_cols(mu, 0, 1));
    Tensor dy = sub(Tensor::from_values({1, 1}, {gt.dy}), slice_cols(mu, 1, 2));
    Tensor one_m_r2 = sub(Tensor::from_values({1, 1}, {1.0}), mul(r, r));
    Tensor zx = div(dx, sx), zy = div(dy, sy);
    Tensor quad = sub(add(mul(zx, zx), mul(zy, zy)), scale(mul(r, mul(zx, zy)), 2.0));
    Tensor log_norm = add(add_scalar(add(log_t(sx), log_t(sy)), std::log(2.0 * M_PI)),
                          scale(log_t(one_m_r2), 0.5));
    Tensor nll_gauss = add(log_norm, div(quad, scale(one_m_r2, 2.0)));
    Tensor dyaw = sub(Tensor::from_values({1, 1}, {gt.dyaw}), slice_rows(d.mu_yaw, k, k + 1));
    Tensor nll_laplace = add_scalar(abs_t(dyaw), std::log(2.0));
    total = add(total, add(sum_all(neg(log_p)), add(sum_all(nll_gauss), sum_all(nll_laplace))));
  }
  return scale(total, 1.0 / static_cast<double>(pos.size()));
}

// One planner attention block: self-attention over the K queries (queries and
// keys carry content+position concatenated, values content only), cross-
// attention into the provided memory, feed-forward, then the two heads.
struct MpaBlock {
  LayerNorm ln1, ln2, ln3, ln_h;
  MultiheadAttention self_attn, cross_attn;
  Mlp ffn, gmm_head, yaw_head;

  MpaBlock() = default;
  MpaBlock(ParamStore& ps, const std::string& name, const Config& cfg)
      : ln1(ps, name + ".ln1", cfg.dim),
        ln2(ps, name + ".ln2", cfg.dim),
        ln3(ps, name + ".ln3", cfg.dim),
        ln_h(ps, name + ".ln_h", cfg.dim),
        self_attn(ps, name + ".self", cfg.dim, cfg.mpa_heads, 2 * cfg.dim, 2 * cfg.dim, cfg.dim),
        cross_attn(ps, name + ".cross", cfg.dim, cfg.mpa_heads, 2 * cfg.dim, cfg.dim, cfg.dim),
        ffn(ps, name + ".ffn", cfg.dim, cfg.dim * cfg.ffn_mult, cfg.dim),
        gmm_head(ps, name + ".gmm", cfg.dim, cfg.dim * cfg.ffn_mult, 6),
        yaw_head(ps, name + ".yaw", cfg.dim, cfg.dim * cfg.ffn_mult, 1) {}

  Tensor forward_tokens(const Tensor& q, const Tensor& q_pe, const Tensor& memory,
                        const AttnMask* cross_mask) const {
    Tensor h = q;
    {
      Tensor nq = ln1(h);
      Tensor qk = concat_cols({nq, q_pe});
      h = add(h, self_attn.forward(qk, qk, nq));
    }
    {
      Tensor nq = ln2(h);
      Tensor qc = concat_cols({nq, q_pe});
      h = add(h, cross_attn.forward(qc, memory, memory, cross_mask));
    }
    return add(h, ffn(ln3(h)));
  }

  MixtureActionDistribution heads(const Tensor& q, const Config& cfg) const {
    Tensor h = ln_h(q);
    Tensor g = gmm_head(h);   // K x 6: logit, mu_x, mu_y, raw sigma_x/y, raw rho
    Tensor yaw = yaw_head(h); // K x 1
    MixtureActionDistribution d;
    d.logits = slice_cols(g, 0, 1);
    d.probs = transpose(softmax_rows(transpose(d.logits)));
    d.mu = clamp(slice_cols(g, 1, 3), -cfg.action_clamp, cfg.action_clamp);
    d.sigma = add_scalar(softplus(slice_cols(g, 3, 5)), cfg.sigma_min);
    d.rho = scale(tanh_t(slice_cols(g, 5, 6)), kRhoBound);
    d.mu_yaw = yaw;
    return d;
  }
};

struct PlannerLayerResult {
  Tensor q;
  MixtureActionDistribution dist;
};

// The J-layer stack. Memory composition (environment tokens only vs. with
// latent samples appended) is the caller's responsibility; layer index I
// marks where the intermediate action is read off.
class Planner {
 public:
  Planner(ParamStore& ps, const Config& cfg) : cfg_(cfg) {
    q_pe0_ = ps.normal("mpp.q_pe0", {cfg.modes, cfg.dim});
    for (int j = 0; j < cfg.planner_layers; ++j) {
      blocks_.emplace_back(ps, "mpp.layer" + std::to_string(j), cfg);
      if (j > 0)
        pe_mlps_.emplace_back(ps, "mpp.pe" + std::to_string(j), 7, cfg.dim * cfg.ffn_mult,
                              cfg.dim);
    }
  }

  Tensor initial_queries() const { return Tensor::zeros({cfg_.modes, cfg_.dim}); }

  // Run layers [from, to). `prev` is layer from-1's distribution (null only
  // when from == 0). Returns one result per executed layer.
  std::vector<PlannerLayerResult> run_layers(int from, int to, Tensor q,
                                             const MixtureActionDistribution* prev,
                                             const Tensor& memory,
                                             const std::vector<bool>& memory_valid) const {
    if (from < 0 || to > cfg_.planner_layers || from >= to)
      throw TensorError("planner layer range out of bounds");
    if (from > 0 && !prev)
      throw TensorError("planner layers past the first need the previous distribution");
    if (static_cast<int>(memory_valid.size()) != memory.rows())
      throw TensorError("planner memory mask size mismatch");
    AttnMask cross = key_padding_mask(cfg_.modes, memory_valid);
    std::vector<PlannerLayerResult> out;
    const MixtureActionDistribution* link = prev;
    for (int j = from; j < to; ++j) {
      Tensor q_pe = j == 0 ? q_pe0_ : pe_mlps_[j - 1](link->embed_rows());
      q = blocks_[j].forward_tokens(q, q_pe, memory, &cross);
      out.push_back({q, blocks_[j].heads(q, cfg_)});
      link = &out.back().dist;
    }
    return out;
  }

  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  Tensor q_pe0_;
  std::vector<MpaBlock> blocks_;
  std::vector<Mlp> pe_mlps_;
};

}  // namespace latentplan
