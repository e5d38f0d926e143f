#pragma once

// Parameter store, initialization and the transformer building blocks used
// by the scene encoder, the latent world model and the planner.

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "latentplan/tensor.hpp"

namespace latentplan {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool learnable = true;
};

// Flat registry of named parameters. Names must be unique.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  Tensor add(const std::string& name, Tensor t, bool learnable = true) {
    if (by_name_.count(name)) throw TensorError("duplicate parameter name: " + name);
    by_name_[name] = params_.size();
    params_.push_back(Parameter{name, t, learnable});
    return t;
  }

  Tensor zeros(const std::string& name, std::vector<int> shape) {
    return add(name, Tensor::zeros(std::move(shape), true));
  }

  // Xavier-uniform for weight matrices
  Tensor xavier(const std::string& name, int in, int out) {
    Tensor t = Tensor::zeros({in, out}, true);
    double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng_);
    return add(name, t);
  }

  // N(0, std) for embeddings / learnable tokens
  Tensor normal(const std::string& name, std::vector<int> shape, double std_dev = 0.02) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : t.values()) v = dist(rng_);
    return add(name, t);
  }

  Tensor ones(const std::string& name, std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) v = 1.0;
    return add(name, t);
  }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  Parameter& find(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw TensorError("unknown parameter: " + name);
    return params_[it->second];
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      for (double g : p.tensor.grad()) s += g * g;
    return std::sqrt(s);
  }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> by_name_;
  std::mt19937_64 rng_;
};

struct Linear {
  Tensor w;  // in x out
  Tensor b;  // 1 x out

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out)
      : w(ps.xavier(name + ".w", in, out)), b(ps.zeros(name + ".b", {1, out})) {}

  Tensor operator()(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim)
      : gamma(ps.ones(name + ".gamma", {1, dim})), beta(ps.zeros(name + ".beta", {1, dim})) {}

  Tensor operator()(const Tensor& x) const { return layernorm_rows(x, gamma, beta); }
};

struct Mlp {
  Linear fc1, fc2;

  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name, int in, int hidden, int out)
      : fc1(ps, name + ".fc1", in, hidden), fc2(ps, name + ".fc2", hidden, out) {}

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

// Additive attention mask: 0 = attend, -inf = blocked. Shape q_len x k_len.
using AttnMask = std::vector<double>;

constexpr double kMaskBlocked = -1e30;

inline AttnMask causal_mask(int len) {
  AttnMask m(static_cast<std::size_t>(len) * len, 0.0);
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) m[i * static_cast<std::size_t>(len) + j] = kMaskBlocked;
  return m;
}

// key_valid[j] == false blocks column j for all queries
inline AttnMask key_padding_mask(int q_len, const std::vector<bool>& key_valid) {
  const int k_len = static_cast<int>(key_valid.size());
  AttnMask m(static_cast<std::size_t>(q_len) * k_len, 0.0);
  for (int i = 0; i < q_len; ++i)
    for (int j = 0; j < k_len; ++j)
      if (!key_valid[j]) m[i * static_cast<std::size_t>(k_len) + j] = kMaskBlocked;
  return m;
}

struct MultiheadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  int dim = 0;

  MultiheadAttention() = default;
  MultiheadAttention(ParamStore& ps, const std::string& name, int d, int num_heads,
                     int q_dim = -1, int k_dim = -1, int v_dim = -1)
      : wq(ps, name + ".wq", q_dim < 0 ? d : q_dim, d),
        wk(ps, name + ".wk", k_dim < 0 ? d : k_dim, d),
        wv(ps, name + ".wv", v_dim < 0 ? (k_dim < 0 ? d : k_dim) : v_dim, d),
        wo(ps, name + ".wo", d, d),
        heads(num_heads),
        dim(d) {
    if (d % num_heads != 0) throw TensorError("attention dim not divisible by heads");
  }

  Tensor operator()(const Tensor& q_in, const Tensor& kv_in, const AttnMask* mask = nullptr,
                    std::vector<std::vector<double>>* attn_out = nullptr) const {
    return forward(q_in, kv_in, kv_in, mask, attn_out);
  }

  Tensor forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                 const AttnMask* mask = nullptr,
                 std::vector<std::vector<double>>* attn_out = nullptr) const {
    const int dh = dim / heads;
    Tensor q = wq(q_in), k = wk(k_in), v = wv(v_in);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
      Tensor attn = softmax_rows(scores, mask);
      if (attn_out) attn_out->push_back(attn.values());
      head_outs.push_back(matmul(attn, vh));
    }
    return wo(concat_cols(head_outs));
  }
};

// Pre-norm transformer layer; with_cross adds a cross-attention sub-block.
struct TransformerLayer {
  LayerNorm ln1, ln2, ln3;
  MultiheadAttention self_attn, cross_attn;
  Mlp ffn;
  bool with_cross = false;

  TransformerLayer() = default;
  TransformerLayer(ParamStore& ps, const std::string& name, int d, int heads, int ffn_hidden,
                   bool cross = false)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        self_attn(ps, name + ".self", d, heads),
        ffn(ps, name + ".ffn", d, ffn_hidden, d),
        with_cross(cross) {
    if (cross) {
      ln3 = LayerNorm(ps, name + ".ln3", d);
      cross_attn = MultiheadAttention(ps, name + ".cross", d, heads);
    }
  }

  Tensor operator()(const Tensor& x, const AttnMask* self_mask = nullptr,
                    const Tensor* memory = nullptr, const AttnMask* cross_mask = nullptr) const {
    Tensor h = x;
    {
      Tensor nx = ln1(h);
      h = add(h, self_attn(nx, nx, self_mask));
    }
    if (with_cross) {
      if (!memory) throw TensorError("cross-attention layer needs memory");
      h = add(h, cross_attn(ln3(h), *memory, cross_mask));
    }
    h = add(h, ffn(ln2(h)));
    return h;
  }
};

}  // namespace latentplan
