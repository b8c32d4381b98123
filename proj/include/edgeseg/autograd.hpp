#pragma once

/// @file autograd.hpp
/// Reverse-mode automatic differentiation over rank-5 tensors. The graph is
/// dynamic: every forward call builds fresh nodes that reference the shared
/// parameter leaves, and backward() runs one reverse topological sweep.
/// Everything is templated on the scalar type so the same network code can
/// be finite-difference-checked in double precision.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "edgeseg/errors.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::string name;  // non-empty only for parameter leaves
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;  // accumulates into parents

  bool is_leaf() const { return parents.empty(); }

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> parameter(Tensor<T> value, std::string name) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

// Depth-first post-order over the ancestor DAG; visits every node once.
template <typename T>
void topo_order(const std::vector<Var<T>>& roots, std::vector<Var<T>>& order) {
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::pair<Var<T>, std::size_t>> stack;
  for (const auto& root : roots) {
    if (!root || seen.count(root.get())) continue;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        const Var<T> parent = node->parents[next++];
        if (!seen.count(parent.get())) {
          seen.insert(parent.get());
          stack.emplace_back(parent, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
}

/// Seeds each root's gradient and sweeps the DAG once in reverse
/// topological order. Parameter gradients accumulate, so calling this for
/// several micro-batches before an optimizer step sums their gradients.
template <typename T>
void backward(const std::vector<std::pair<Var<T>, Tensor<T>>>& seeded_roots) {
  std::vector<Var<T>> roots;
  for (const auto& [root, seed] : seeded_roots) {
    require_same_shape(root->value.shape(), seed.shape(), "backward seed");
    roots.push_back(root);
  }
  std::vector<Var<T>> order;
  topo_order(roots, order);

  // Non-leaf grads are scratch for this sweep only; leaves keep accumulating.
  for (const auto& node : order)
    if (!node->is_leaf()) node->grad = Tensor<T>();

  for (const auto& [root, seed] : seeded_roots) {
    Tensor<T>& g = root->ensure_grad();
    for (std::int64_t i = 0; i < seed.numel(); ++i) g[i] += seed[i];
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& node = **it;
    if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
  }
}

/// Scalar convenience: seeds d(root)/d(root) = 1.
template <typename T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1) throw ContractViolation("backward: scalar root expected");
  Tensor<T> one(root->value.shape());
  one[0] = T{1};
  backward<T>({{root, std::move(one)}});
}

// ---------------------------------------------------------------------------
// Pointwise and structural ops.

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T{0} ? x->value[i] : T{0};
  return make_op<T>(std::move(out), {x}, [x](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->ensure_grad();
    for (std::int64_t i = 0; i < gx.numel(); ++i)
      if (x->value[i] > T{0}) gx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = T{1} / (T{1} + std::exp(-x->value[i]));
  return make_op<T>(std::move(out), {x}, [x](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->ensure_grad();
    for (std::int64_t i = 0; i < gx.numel(); ++i) {
      const T s = self.value[i];
      gx[i] += self.grad[i] * s * (T{1} - s);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    for (const auto& p : {a, b}) {
      if (!p->requires_grad) continue;
      Tensor<T>& g = p->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mul");
  Tensor<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      Tensor<T>& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& g = b->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

/// Feature gating by a single-channel map: out[n,c,p] = f[n,c,p] * (1 + e[n,0,p]).
template <typename T>
Var<T> channel_gate(const Var<T>& f, const Var<T>& e) {
  const TensorShape fs = f->value.shape();
  const TensorShape es = e->value.shape();
  if (es.c != 1 || es.n != fs.n || es.x != fs.x || es.y != fs.y || es.z != fs.z)
    throw ShapeError("channel_gate: gate must be single-channel with matching grid " + fs.str() + " vs " + es.str());
  Tensor<T> out(fs);
  const std::int64_t v = fs.voxels();
  for (std::int64_t n = 0; n < fs.n; ++n) {
    const T* ep = e->value.channel(n, 0);
    for (std::int64_t c = 0; c < fs.c; ++c) {
      const T* fp = f->value.channel(n, c);
      T* op = out.channel(n, c);
      for (std::int64_t i = 0; i < v; ++i) op[i] = fp[i] * (T{1} + ep[i]);
    }
  }
  return make_op<T>(std::move(out), {f, e}, [f, e, fs, v](Node<T>& self) {
    if (f->requires_grad) {
      Tensor<T>& gf = f->ensure_grad();
      for (std::int64_t n = 0; n < fs.n; ++n) {
        const T* ep = e->value.channel(n, 0);
        for (std::int64_t c = 0; c < fs.c; ++c) {
          const T* gy = self.grad.channel(n, c);
          T* gp = gf.channel(n, c);
          for (std::int64_t i = 0; i < v; ++i) gp[i] += gy[i] * (T{1} + ep[i]);
        }
      }
    }
    if (e->requires_grad) {
      Tensor<T>& ge = e->ensure_grad();
      for (std::int64_t n = 0; n < fs.n; ++n) {
        T* gp = ge.channel(n, 0);
        for (std::int64_t c = 0; c < fs.c; ++c) {
          const T* gy = self.grad.channel(n, c);
          const T* fp = f->value.channel(n, c);
          for (std::int64_t i = 0; i < v; ++i) gp[i] += gy[i] * fp[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractViolation("concat_channels: no inputs");
  TensorShape s = parts[0]->value.shape();
  std::int64_t total_c = 0;
  for (const auto& p : parts) {
    const TensorShape ps = p->value.shape();
    if (ps.n != s.n || ps.x != s.x || ps.y != s.y || ps.z != s.z)
      throw ShapeError("concat_channels: grid mismatch " + s.str() + " vs " + ps.str());
    total_c += ps.c;
  }
  TensorShape os = s;
  os.c = total_c;
  Tensor<T> out(os);
  const std::int64_t v = s.voxels();
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::int64_t co = 0;
    for (const auto& p : parts)
      for (std::int64_t c = 0; c < p->value.shape().c; ++c, ++co)
        std::copy_n(p->value.channel(n, c), v, out.channel(n, co));
  }
  return make_op<T>(std::move(out), parts, [parts, s, v](Node<T>& self) {
    for (std::int64_t n = 0; n < s.n; ++n) {
      std::int64_t co = 0;
      for (const auto& p : parts) {
        const std::int64_t pc = p->value.shape().c;
        if (!p->requires_grad) {
          co += pc;
          continue;
        }
        Tensor<T>& g = p->ensure_grad();
        for (std::int64_t c = 0; c < pc; ++c, ++co) {
          const T* gy = self.grad.channel(n, co);
          T* gp = g.channel(n, c);
          for (std::int64_t i = 0; i < v; ++i) gp[i] += gy[i];
        }
      }
    }
  });
}

/// Nearest-neighbour upsampling by integer factors per spatial axis.
template <typename T>
Var<T> upsample_nearest(const Var<T>& x, const std::array<std::int64_t, 3>& factor) {
  for (std::int64_t f : factor)
    if (f < 1) throw ContractViolation("upsample_nearest: factors must be >= 1");
  const TensorShape s = x->value.shape();
  TensorShape os = s;
  os.x = s.x * factor[0];
  os.y = s.y * factor[1];
  os.z = s.z * factor[2];
  Tensor<T> out(os);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* in = x->value.channel(n, c);
      T* op = out.channel(n, c);
      for (std::int64_t z = 0; z < os.z; ++z)
        for (std::int64_t y = 0; y < os.y; ++y) {
          const std::int64_t src_row = (z / factor[2]) * s.y * s.x + (y / factor[1]) * s.x;
          T* dst = op + z * os.y * os.x + y * os.x;
          for (std::int64_t xx = 0; xx < os.x; ++xx) dst[xx] = in[src_row + xx / factor[0]];
        }
    }
  return make_op<T>(std::move(out), {x}, [x, s, os, factor](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->ensure_grad();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T* gy = self.grad.channel(n, c);
        T* gp = gx.channel(n, c);
        for (std::int64_t z = 0; z < os.z; ++z)
          for (std::int64_t y = 0; y < os.y; ++y) {
            const std::int64_t src_row = (z / factor[2]) * s.y * s.x + (y / factor[1]) * s.x;
            const T* grow = gy + z * os.y * os.x + y * os.x;
            for (std::int64_t xx = 0; xx < os.x; ++xx) gp[src_row + xx / factor[0]] += grow[xx];
          }
      }
  });
}

/// Per-channel normalization with affine parameters gamma and beta (shape
/// (1, C, 1, 1, 1)). Statistics are always the current ones: computed over
/// (batch, x, y, z) when the batch has more than one sample, otherwise per
/// sample over (x, y, z). Accumulation runs in double regardless of T.
template <typename T>
Var<T> norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
  const TensorShape s = x->value.shape();
  const TensorShape ps{1, s.c, 1, 1, 1};
  require_same_shape(gamma->value.shape(), ps, "norm gamma");
  require_same_shape(beta->value.shape(), ps, "norm beta");
  static constexpr double kEps = 1e-5;

  const bool batch_stats = s.n > 1;
  const std::int64_t groups = batch_stats ? s.c : s.n * s.c;
  const std::int64_t v = s.voxels();
  const std::int64_t m = batch_stats ? s.n * v : v;  // elements per statistic group

  // Group g covers channel (g % c) of every sample (batch) or of sample
  // g / c (instance). Record mean and inverse sigma for the backward pass.
  std::vector<double> mean(static_cast<std::size_t>(groups)), inv_sigma(static_cast<std::size_t>(groups));
  auto group_channels = [batch_stats, s](std::int64_t g) {
    std::vector<std::pair<std::int64_t, std::int64_t>> nc;
    if (batch_stats) {
      for (std::int64_t n = 0; n < s.n; ++n) nc.emplace_back(n, g);
    } else {
      nc.emplace_back(g / s.c, g % s.c);
    }
    return nc;
  };
  for (std::int64_t g = 0; g < groups; ++g) {
    double sum = 0.0, sq = 0.0;
    for (auto [n, c] : group_channels(g)) {
      const T* p = x->value.channel(n, c);
      for (std::int64_t i = 0; i < v; ++i) {
        sum += double(p[i]);
        sq += double(p[i]) * double(p[i]);
      }
    }
    const double mu = sum / double(m);
    const double var = std::max(0.0, sq / double(m) - mu * mu);
    mean[static_cast<std::size_t>(g)] = mu;
    inv_sigma[static_cast<std::size_t>(g)] = 1.0 / std::sqrt(var + kEps);
  }

  Tensor<T> out(s);
  for (std::int64_t g = 0; g < groups; ++g) {
    for (auto [n, c] : group_channels(g)) {
      const double mu = mean[static_cast<std::size_t>(g)];
      const double is = inv_sigma[static_cast<std::size_t>(g)];
      const double gm = double(gamma->value[c]);
      const double bt = double(beta->value[c]);
      const T* p = x->value.channel(n, c);
      T* o = out.channel(n, c);
      for (std::int64_t i = 0; i < v; ++i) o[i] = T((double(p[i]) - mu) * is * gm + bt);
    }
  }

  return make_op<T>(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, s, groups, v, m, mean, inv_sigma, group_channels](Node<T>& self) {
                      for (std::int64_t g = 0; g < groups; ++g) {
                        const double mu = mean[static_cast<std::size_t>(g)];
                        const double is = inv_sigma[static_cast<std::size_t>(g)];
                        const auto nc = group_channels(g);
                        const std::int64_t c = nc.front().second;
                        const double gm = double(gamma->value[c]);

                        double sum_dy = 0.0, sum_dy_xhat = 0.0;
                        for (auto [n, cc] : nc) {
                          const T* dy = self.grad.channel(n, cc);
                          const T* p = x->value.channel(n, cc);
                          for (std::int64_t i = 0; i < v; ++i) {
                            const double xhat = (double(p[i]) - mu) * is;
                            sum_dy += double(dy[i]);
                            sum_dy_xhat += double(dy[i]) * xhat;
                          }
                        }
                        if (gamma->requires_grad) gamma->ensure_grad()[c] += T(sum_dy_xhat);
                        if (beta->requires_grad) beta->ensure_grad()[c] += T(sum_dy);
                        if (x->requires_grad) {
                          Tensor<T>& gx = x->ensure_grad();
                          const double inv_m = 1.0 / double(m);
                          for (auto [n, cc] : nc) {
                            const T* dy = self.grad.channel(n, cc);
                            const T* p = x->value.channel(n, cc);
                            T* gp = gx.channel(n, cc);
                            for (std::int64_t i = 0; i < v; ++i) {
                              const double xhat = (double(p[i]) - mu) * is;
                              gp[i] += T(gm * is * (double(dy[i]) - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat));
                            }
                          }
                        }
                      }
                    });
}

}  // namespace edgeseg::ad
