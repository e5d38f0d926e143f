#pragma once

// Adam optimizer with cosine learning-rate schedule.

#include <cmath>
#include <vector>

#include "latentplan/nn.hpp"

namespace latentplan {

inline double cosine_lr(int step, int total, double lr0) {
  if (total <= 0) throw TensorError("cosine_lr: total must be positive");
  if (step < 0) throw TensorError("cosine_lr: negative step");
  if (step >= total) return 0.0;
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total));
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_grad_norm(ParamStore& ps, double max_norm) {
  double sq = 0;
  for (const auto& p : ps.params())
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double s = max_norm / norm;
    for (auto& p : ps.params())
      for (double& g : p.tensor.grad()) g *= s;
  }
  return norm;
}

class Adam {
 public:
  explicit Adam(ParamStore& store, double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : store_(&store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : store.params()) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long step_count() const { return step_; }

  // One Adam update; gradients are left untouched (caller zeroes).
  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, step_);
    const double bc2 = 1.0 - std::pow(beta2_, step_);
    auto& params = store_->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].learnable) continue;
      auto& t = params[i].tensor;
      const auto& g = t.grad();
      auto& vals = t.values();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        vals[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  ParamStore* store_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace latentplan
