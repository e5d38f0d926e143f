#pragma once

// Dense double-precision tensors with define-by-run reverse-mode autodiff.
// Nodes form a DAG; backward() walks reachable nodes in reverse creation
// order. Gradients accumulate additively until zero_grad().

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace latentplan {

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline std::atomic<std::uint64_t> node_counter{1};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}
}  // namespace detail

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily, same size as val
  bool tracked = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // pushes grad into parents

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool tracked = false) {
    auto n = std::make_shared<TensorNode>();
    std::size_t count = 1;
    for (int d : shape) {
      if (d < 0) throw TensorError("negative dimension in shape " + detail::shape_str(shape));
      count *= static_cast<std::size_t>(d);
    }
    n->shape = std::move(shape);
    n->val.assign(count, 0.0);
    n->tracked = tracked;
    n->id = detail::node_counter.fetch_add(1, std::memory_order_relaxed);
    return Tensor(std::move(n));
  }

  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool tracked = false) {
    Tensor t = zeros(std::move(shape), tracked);
    if (values.size() != t.size())
      throw TensorError("value count " + std::to_string(values.size()) +
                        " does not match shape " + detail::shape_str(t.shape()));
    t.node_->val = std::move(values);
    return t;
  }

  static Tensor scalar(double v, bool tracked = false) {
    return from_values({}, {v}, tracked);
  }

  bool valid() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->val.size(); }
  bool tracked() const { return node_->tracked; }
  std::shared_ptr<TensorNode> node() const { return node_; }

  int rows() const {
    if (node_->shape.size() != 2) throw TensorError("rows() on non-matrix " + detail::shape_str(node_->shape));
    return node_->shape[0];
  }
  int cols() const {
    if (node_->shape.size() != 2) throw TensorError("cols() on non-matrix " + detail::shape_str(node_->shape));
    return node_->shape[1];
  }

  double item() const {
    if (size() != 1) throw TensorError("item() on tensor of size " + std::to_string(size()));
    return node_->val[0];
  }

  const std::vector<double>& values() const { return node_->val; }
  std::vector<double>& values() { return node_->val; }
  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  double operator()(int r, int c) const { return node_->val[static_cast<std::size_t>(r) * cols() + c]; }
  double& at(int r, int c) { return node_->val[static_cast<std::size_t>(r) * cols() + c]; }

  void zero_grad() { if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline std::shared_ptr<TensorNode> make_node(std::vector<int> shape,
                                             std::vector<std::shared_ptr<TensorNode>> parents) {
  auto n = std::make_shared<TensorNode>();
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  n->shape = std::move(shape);
  n->val.assign(count, 0.0);
  n->tracked = false;
  for (auto& p : parents)
    if (p->tracked) n->tracked = true;
  if (n->tracked) n->parents = std::move(parents);
  n->id = node_counter.fetch_add(1, std::memory_order_relaxed);
  return n;
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  auto n = detail::make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] + bv[i];
  if (n->tracked) {
    auto pa = a.node(), pb = b.node();
    n->backprop = [pa, pb](TensorNode& self) {
      if (pa->tracked) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->tracked) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(n);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  auto n = detail::make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] - bv[i];
  if (n->tracked) {
    auto pa = a.node(), pb = b.node();
    n->backprop = [pa, pb](TensorNode& self) {
      if (pa->tracked) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->tracked) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor(n);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  auto n = detail::make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] * bv[i];
  if (n->tracked) {
    auto pa = a.node(), pb = b.node();
    n->backprop = [pa, pb](TensorNode& self) {
      if (pa->tracked) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->val[i];
      }
      if (pb->tracked) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->val[i];
      }
    };
  }
  return Tensor(n);
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("div", a, b);
  auto n = detail::make_node(a.shape(), {a.node(), b.node()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] / bv[i];
  if (n->tracked) {
    auto pa = a.node(), pb = b.node();
    n->backprop = [pa, pb](TensorNode& self) {
      if (pa->tracked) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pb->val[i];
      }
      if (pb->tracked) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb->grad[i] -= self.grad[i] * pa->val[i] / (pb->val[i] * pb->val[i]);
      }
    };
  }
  return Tensor(n);
}

inline Tensor scale(const Tensor& a, double c) {
  auto n = detail::make_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] * c;
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa, c](TensorNode& self) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * c;
    };
  }
  return Tensor(n);
}

inline Tensor add_scalar(const Tensor& a, double c) {
  auto n = detail::make_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = av[i] + c;
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa](TensorNode& self) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    };
  }
  return Tensor(n);
}

namespace detail {
// generic unary op helper
template <class F, class DF>
inline Tensor unary(const Tensor& a, F f, DF df) {
  auto n = make_node(a.shape(), {a.node()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n->val[i] = f(av[i]);
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa, df](TensorNode& self) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * df(pa->val[i], self.val[i]);
    };
  }
  return Tensor(n);
}
}  // namespace detail

// df signatures take (x, y) where y = f(x)
inline Tensor exp_t(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}
inline Tensor log_t(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}
inline Tensor tanh_t(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}
inline Tensor abs_t(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::fabs(x); },
                       [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor softplus(const Tensor& a) {
  // log(1+exp(x)), numerically stable for large |x|
  return detail::unary(
      a,
      [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return detail::unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

// clamp with zero gradient outside [lo, hi]
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// identity forward, zero backward
inline Tensor detach(const Tensor& a) {
  return Tensor::from_values(a.shape(), a.values(), false);
}

// ---- matrix ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw TensorError("matmul: incompatible shapes " + detail::shape_str(a.shape()) + " x " +
                      detail::shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n2 = b.cols();
  auto n = detail::make_node({m, n2}, {a.node(), b.node()});
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = n->val.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* Bp = B + p * n2;
      double* Ci = C + i * n2;
      for (int j = 0; j < n2; ++j) Ci[j] += aip * Bp[j];
    }
  if (n->tracked) {
    auto pa = a.node(), pb = b.node();
    n->backprop = [pa, pb, m, k, n2](TensorNode& self) {
      const double* dC = self.grad.data();
      if (pa->tracked) {
        pa->ensure_grad();
        // dA = dC * B^T
        const double* B = pb->val.data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0;
            const double* dCi = dC + i * n2;
            const double* Bp = B + p * n2;
            for (int j = 0; j < n2; ++j) s += dCi[j] * Bp[j];
            pa->grad[i * k + p] += s;
          }
      }
      if (pb->tracked) {
        pb->ensure_grad();
        // dB = A^T * dC
        const double* A = pa->val.data();
        for (int i = 0; i < m; ++i) {
          const double* dCi = dC + i * n2;
          for (int p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            double* dBp = pb->grad.data() + p * n2;
            for (int j = 0; j < n2; ++j) dBp[j] += aip * dCi[j];
          }
        }
      }
    };
  }
  return Tensor(n);
}

inline Tensor transpose(const Tensor& a) {
  const int m = a.rows(), k = a.cols();
  auto n = detail::make_node({k, m}, {a.node()});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) n->val[j * m + i] = a.values()[i * k + j];
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa, m, k](TensorNode& self) {
      pa->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) pa->grad[i * k + j] += self.grad[j * m + i];
    };
  }
  return Tensor(n);
}

// broadcast a row vector (1 x C) over every row of (R x C)
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.shape().size() != 2 || v.rows() != 1 || v.cols() != a.cols())
    throw TensorError("add_rowvec: vector shape " + detail::shape_str(v.shape()) +
                      " does not broadcast over " + detail::shape_str(a.shape()));
  const int r = a.rows(), c = a.cols();
  auto n = detail::make_node(a.shape(), {a.node(), v.node()});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) n->val[i * c + j] = a.values()[i * c + j] + v.values()[j];
  if (n->tracked) {
    auto pa = a.node(), pv = v.node();
    n->backprop = [pa, pv, r, c](TensorNode& self) {
      if (pa->tracked) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pv->tracked) {
        pv->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) pv->grad[j] += self.grad[i * c + j];
      }
    };
  }
  return Tensor(n);
}

// ---- softmax / layernorm ----

// row-wise softmax; optional additive mask (same shape, untracked constants)
inline Tensor softmax_rows(const Tensor& a, const std::vector<double>* mask = nullptr) {
  if (a.shape().size() != 2)
    throw TensorError("softmax_rows: need matrix, got " + detail::shape_str(a.shape()));
  if (mask && mask->size() != a.size())
    throw TensorError("softmax_rows: mask size mismatch");
  const int r = a.rows(), c = a.cols();
  auto n = detail::make_node(a.shape(), {a.node()});
  for (int i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      double x = a.values()[i * c + j] + (mask ? (*mask)[i * c + j] : 0.0);
      mx = std::max(mx, x);
    }
    double sum = 0;
    for (int j = 0; j < c; ++j) {
      double x = a.values()[i * c + j] + (mask ? (*mask)[i * c + j] : 0.0);
      double e = std::exp(x - mx);
      n->val[i * c + j] = e;
      sum += e;
    }
    for (int j = 0; j < c; ++j) n->val[i * c + j] /= sum;
  }
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa, r, c](TensorNode& self) {
      pa->ensure_grad();
      for (int i = 0; i < r; ++i) {
        double dot = 0;
        for (int j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.val[i * c + j];
        for (int j = 0; j < c; ++j)
          pa->grad[i * c + j] += self.val[i * c + j] * (self.grad[i * c + j] - dot);
      }
    };
  }
  return Tensor(n);
}

// row-wise layer normalization with affine parameters gamma, beta (1 x C)
inline Tensor layernorm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                             double eps = 1e-5) {
  if (gamma.cols() != a.cols() || beta.cols() != a.cols())
    throw TensorError("layernorm_rows: affine params must be 1 x " + std::to_string(a.cols()));
  const int r = a.rows(), c = a.cols();
  auto n = detail::make_node(a.shape(), {a.node(), gamma.node(), beta.node()});
  std::vector<double> inv_std(r), xhat(n->val.size());
  for (int i = 0; i < r; ++i) {
    double mean = 0;
    for (int j = 0; j < c; ++j) mean += a.values()[i * c + j];
    mean /= c;
    double var = 0;
    for (int j = 0; j < c; ++j) {
      double d = a.values()[i * c + j] - mean;
      var += d * d;
    }
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < c; ++j) {
      double xh = (a.values()[i * c + j] - mean) * is;
      xhat[i * c + j] = xh;
      n->val[i * c + j] = xh * gamma.values()[j] + beta.values()[j];
    }
  }
  if (n->tracked) {
    auto pa = a.node(), pg = gamma.node(), pb = beta.node();
    n->backprop = [pa, pg, pb, r, c, inv_std = std::move(inv_std),
                   xhat = std::move(xhat)](TensorNode& self) {
      for (int i = 0; i < r; ++i) {
        if (pa->tracked) {
          pa->ensure_grad();
          double sum_dy = 0, sum_dy_xh = 0;
          for (int j = 0; j < c; ++j) {
            double dy = self.grad[i * c + j] * pg->val[j];
            sum_dy += dy;
            sum_dy_xh += dy * xhat[i * c + j];
          }
          for (int j = 0; j < c; ++j) {
            double dy = self.grad[i * c + j] * pg->val[j];
            pa->grad[i * c + j] +=
                inv_std[i] * (dy - sum_dy / c - xhat[i * c + j] * sum_dy_xh / c);
          }
        }
        if (pg->tracked) {
          pg->ensure_grad();
          for (int j = 0; j < c; ++j) pg->grad[j] += self.grad[i * c + j] * xhat[i * c + j];
        }
        if (pb->tracked) {
          pb->ensure_grad();
          for (int j = 0; j < c; ++j) pb->grad[j] += self.grad[i * c + j];
        }
      }
    };
  }
  return Tensor(n);
}

// ---- reductions ----

inline Tensor sum_all(const Tensor& a) {
  auto n = detail::make_node({}, {a.node()});
  n->val[0] = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa](TensorNode& self) {
      pa->ensure_grad();
      for (auto& g : pa->grad) g += self.grad[0];
    };
  }
  return Tensor(n);
}

inline Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// ---- structural ops ----

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_rows: empty input");
  const int c = parts[0].cols();
  int total = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& p : parts) {
    if (p.cols() != c) throw TensorError("concat_rows: column mismatch");
    total += p.rows();
    parents.push_back(p.node());
  }
  auto n = detail::make_node({total, c}, parents);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), n->val.begin() + off);
    off += p.size();
  }
  if (n->tracked) {
    std::vector<std::shared_ptr<TensorNode>> ps = parents;
    n->backprop = [ps](TensorNode& self) {
      std::size_t off = 0;
      for (auto& p : ps) {
        if (p->tracked) {
          p->ensure_grad();
          for (std::size_t i = 0; i < p->val.size(); ++i) p->grad[i] += self.grad[off + i];
        }
        off += p->val.size();
      }
    };
  }
  return Tensor(n);
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1)
    throw TensorError("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                      ") for " + std::to_string(a.rows()) + " rows");
  const int c = a.cols();
  auto n = detail::make_node({r1 - r0, c}, {a.node()});
  std::copy(a.values().begin() + static_cast<std::size_t>(r0) * c,
            a.values().begin() + static_cast<std::size_t>(r1) * c, n->val.begin());
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa, r0, c](TensorNode& self) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[static_cast<std::size_t>(r0) * c + i] += self.grad[i];
    };
  }
  return Tensor(n);
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw TensorError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                      ") for " + std::to_string(a.cols()) + " cols");
  const int r = a.rows(), c = a.cols(), w = c1 - c0;
  auto n = detail::make_node({r, w}, {a.node()});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) n->val[i * w + j] = a.values()[i * c + c0 + j];
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa, r, c, c0, w](TensorNode& self) {
      pa->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) pa->grad[i * c + c0 + j] += self.grad[i * w + j];
    };
  }
  return Tensor(n);
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_cols: empty input");
  const int r = parts[0].rows();
  int total = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& p : parts) {
    if (p.rows() != r) throw TensorError("concat_cols: row mismatch");
    total += p.cols();
    parents.push_back(p.node());
  }
  auto n = detail::make_node({r, total}, parents);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j) n->val[i * total + off + j] = p.values()[i * w + j];
    off += w;
  }
  if (n->tracked) {
    std::vector<std::shared_ptr<TensorNode>> ps = parents;
    n->backprop = [ps, r, total](TensorNode& self) {
      int off = 0;
      for (auto& p : ps) {
        const int w = p->shape[1];
        if (p->tracked) {
          p->ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j) p->grad[i * w + j] += self.grad[i * total + off + j];
        }
        off += w;
      }
    };
  }
  return Tensor(n);
}

// gather rows of a (vocab x C) table by constant indices
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  const int c = table.cols();
  auto n = detail::make_node({static_cast<int>(idx.size()), c}, {table.node()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows())
      throw TensorError("gather_rows: index " + std::to_string(idx[i]) + " out of range");
    std::copy(table.values().begin() + static_cast<std::size_t>(idx[i]) * c,
              table.values().begin() + static_cast<std::size_t>(idx[i] + 1) * c,
              n->val.begin() + i * c);
  }
  if (n->tracked) {
    auto pt = table.node();
    n->backprop = [pt, idx, c](TensorNode& self) {
      pt->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < c; ++j)
          pt->grad[static_cast<std::size_t>(idx[i]) * c + j] += self.grad[i * c + j];
    };
  }
  return Tensor(n);
}

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  if (count != a.size())
    throw TensorError("reshape: size mismatch " + detail::shape_str(a.shape()) + " -> " +
                      detail::shape_str(shape));
  auto n = detail::make_node(std::move(shape), {a.node()});
  n->val = a.values();
  if (n->tracked) {
    auto pa = a.node();
    n->backprop = [pa](TensorNode& self) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    };
  }
  return Tensor(n);
}

// ---- backward ----

inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw TensorError("backward: loss must be scalar, got " +
                                          detail::shape_str(loss.shape()));
  if (!loss.tracked()) return;
  // collect reachable tracked nodes (iterative DFS; graphs can be deep)
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::shared_ptr<TensorNode>> stack{loss.node()};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    if (!cur->tracked || !seen.insert(cur.get()).second) continue;
    order.push_back(cur.get());
    for (auto& p : cur->parents) stack.push_back(p);
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* x, const TensorNode* y) { return x->id > y->id; });
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (TensorNode* node : order) {
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

}  // namespace latentplan
