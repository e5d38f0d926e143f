#pragma once

// Latent world model: an adapter turning encoded scenes into Gaussian latent
// token distributions and actions into per-dimension tokens, plus a causal
// transformer predicting the next latent state distribution.

#include <random>
#include <vector>

#include "latentplan/encoder.hpp"

namespace latentplan {

// Diagonal Gaussian over latent tokens; shapes M x D.
struct LatentDist {
  Tensor mean;
  Tensor log_std;

  // reparameterized draw: mean + std * eps, differentiable in both parameters
  Tensor sample(std::mt19937_64& rng) const {
    Tensor eps = Tensor::zeros({mean.rows(), mean.cols()}, false);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& v : eps.values()) v = n01(rng);
    return add(mean, mul(exp_t(log_std), eps));
  }
};

// KL(p || q) for diagonal Gaussians, summed over all elements. Always >= 0.
inline Tensor kl_gaussian(const LatentDist& p, const LatentDist& q) {
  Tensor diff = sub(p.mean, q.mean);
  Tensor var_p = exp_t(scale(p.log_std, 2.0));
  Tensor two_var_q = scale(exp_t(scale(q.log_std, 2.0)), 2.0);
  Tensor ratio = div(add(var_p, mul(diff, diff)), two_var_q);
  return sum_all(add(sub(q.log_std, p.log_std), add_scalar(ratio, -0.5)));
}

// Cross-attention adapter: M learnable queries attend over the encoded scene's
// environment tokens; two MLP heads emit the latent distribution.
class Adapter {
 public:
  Adapter(ParamStore& ps, const Config& cfg) : cfg_(cfg) {
    queries_ = ps.normal("adapter.queries", {cfg.latent_tokens, cfg.dim});
    const int hidden = cfg.dim * cfg.ffn_mult;
    for (int i = 0; i < cfg.adapter_layers; ++i)
      layers_.emplace_back(ps, "adapter.layer" + std::to_string(i), cfg.dim, cfg.adapter_heads,
                           hidden, /*cross=*/true);
    ln_f_ = LayerNorm(ps, "adapter.ln_f", cfg.dim);
    mean_head_ = Mlp(ps, "adapter.mean", cfg.dim, hidden, cfg.dim);
    log_std_head_ = Mlp(ps, "adapter.log_std", cfg.dim, hidden, cfg.dim);
    // action tokenizer: each action dimension gets its own scalar->D map
    for (int i = 0; i < 3; ++i)
      action_maps_.emplace_back(ps, "adapter.action" + std::to_string(i), 1, cfg.dim);
  }

  LatentDist adapt_state(const EncodedScene& scene) const {
    AttnMask cross = key_padding_mask(cfg_.latent_tokens, scene.valid);
    Tensor q = queries_;
    for (const auto& layer : layers_)
      q = layer(q, nullptr, &scene.env_tokens, &cross);
    q = ln_f_(q);
    LatentDist out;
    out.mean = mean_head_(q);
    out.log_std = clamp(log_std_head_(q), cfg_.log_std_min, cfg_.log_std_max);
    return out;
  }

  // action (1 x 3, differentiable) -> three D-wide tokens, one per dimension
  Tensor adapt_action(const Tensor& action) const {
    if (action.rows() != 1 || action.cols() != 3)
      throw TensorError("adapt_action expects a 1x3 action");
    std::vector<Tensor> tokens;
    tokens.reserve(3);
    for (int i = 0; i < 3; ++i)
      tokens.push_back(action_maps_[i](slice_cols(action, i, i + 1)));
    return concat_rows(tokens);
  }

  Tensor adapt_action(const EgoAction& a) const {
    return adapt_action(Tensor::from_values({1, 3}, {a.dx, a.dy, a.dyaw}));
  }

 private:
  Config cfg_;
  Tensor queries_;
  std::vector<TransformerLayer> layers_;
  LayerNorm ln_f_;
  Mlp mean_head_, log_std_head_;
  std::vector<Linear> action_maps_;
};

// Causal transformer over interleaved (action[3], state[M]) token blocks with
// a factorized position embedding: per-step temporal row + per-slot spatial
// row, added to each token. Outputs at step i's state positions parameterize
// the distribution of the next step's latent state.
class WorldModel {
 public:
  WorldModel(ParamStore& ps, const Config& cfg) : cfg_(cfg), block_(3 + cfg.latent_tokens) {
    temporal_ = ps.normal("lwm.temporal", {cfg.context_steps, cfg.dim});
    spatial_ = ps.normal("lwm.spatial", {block_, cfg.dim});
    const int hidden = cfg.dim * cfg.ffn_mult;
    for (int i = 0; i < cfg.lwm_layers; ++i)
      layers_.emplace_back(ps, "lwm.layer" + std::to_string(i), cfg.dim, cfg.lwm_heads, hidden);
    ln_f_ = LayerNorm(ps, "lwm.ln_f", cfg.dim);
    mean_head_ = Mlp(ps, "lwm.mean", cfg.dim, hidden, cfg.dim);
    log_std_head_ = Mlp(ps, "lwm.log_std", cfg.dim, hidden, cfg.dim);
  }

  // token block for step i: (action tokens, state tokens) + spatial embedding
  // per slot + temporal embedding per step, added (factorized position code)
  Tensor embed_block(int step, const Tensor& action_tokens, const Tensor& state_tokens) const {
    Tensor block = concat_rows({action_tokens, state_tokens});
    if (block.rows() != block_) throw TensorError("world model token block has wrong size");
    block = add(block, spatial_);
    return add_rowvec(block, slice_rows(temporal_, step, step + 1));
  }

  // actions[i]: 3 x D tokens; states[i]: M x D samples; one entry per step.
  // Returns one predicted distribution per step: result[i] models the latent
  // state at step i+1 (read off at step i's state-token positions).
  std::vector<LatentDist> predict_next(const std::vector<Tensor>& actions,
                                       const std::vector<Tensor>& states,
                                       std::vector<std::vector<double>>* attn_out = nullptr) const {
    const int steps = static_cast<int>(actions.size());
    if (steps == 0 || states.size() != actions.size())
      throw TensorError("world model needs matching non-empty action/state sequences");
    if (steps > cfg_.context_steps)
      throw TensorError("world model context overflow: " + std::to_string(steps) + " > " +
                        std::to_string(cfg_.context_steps));
    std::vector<Tensor> blocks;
    blocks.reserve(steps);
    for (int i = 0; i < steps; ++i) blocks.push_back(embed_block(i, actions[i], states[i]));
    Tensor seq = steps == 1 ? blocks[0] : concat_rows(blocks);
    AttnMask mask = causal_mask(steps * block_);
    for (const auto& layer : layers_) {
      if (attn_out) {
        Tensor nx = layernorm_rows(seq, layer.ln1.gamma, layer.ln1.beta);
        seq = add(seq, layer.self_attn(nx, nx, &mask, attn_out));
        seq = add(seq, layer.ffn(layernorm_rows(seq, layer.ln2.gamma, layer.ln2.beta)));
      } else {
        seq = layer(seq, &mask);
      }
    }
    seq = ln_f_(seq);
    std::vector<LatentDist> out;
    out.reserve(steps);
    for (int i = 0; i < steps; ++i) {
      Tensor h = slice_rows(seq, i * block_ + 3, (i + 1) * block_);
      LatentDist d;
      d.mean = mean_head_(h);
      d.log_std = clamp(log_std_head_(h), cfg_.log_std_min, cfg_.log_std_max);
      out.push_back(d);
    }
    return out;
  }

 private:
  Config cfg_;
  int block_;
  Tensor temporal_, spatial_;
  std::vector<TransformerLayer> layers_;
  LayerNorm ln_f_;
  Mlp mean_head_, log_std_head_;
};

}  // namespace latentplan
