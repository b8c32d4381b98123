#pragma once

/// @file nn.hpp
/// Named-parameter store and the reusable network building blocks: plain
/// conv/norm layers, residual bottlenecks, residual refinement blocks
/// (RRB), pyramid attention fusion (PAM), and the multi-level edge
/// attention heads (MLEAM). The model graph composes these; the tests also
/// instantiate them standalone with hand-set weights.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgeseg/autograd.hpp"
#include "edgeseg/conv.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg::nn {

/// Registers parameters in a fixed order and initializes each one as a
/// pure function of (seed, registration ordinal, element index). The
/// textual descriptor accumulates one line per layer, so its hash pins the
/// topology.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  ad::Var<T> gaussian(const std::string& name, const TensorShape& s, double stddev) {
    Tensor<T> t(s);
    const auto ordinal = static_cast<std::uint64_t>(params_.size());
    for (std::int64_t i = 0; i < t.numel(); ++i)
      t[i] = T(stddev * rng::gaussian(seed_, rng::kParamInit, ordinal, static_cast<std::uint64_t>(i)));
    return insert(name, std::move(t));
  }

  ad::Var<T> filled(const std::string& name, const TensorShape& s, T value) {
    return insert(name, Tensor<T>(s, value));
  }

  const std::vector<ad::Var<T>>& all() const { return params_; }

  ad::Var<T> find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ContractViolation("no parameter named " + name);
    return it->second;
  }

  // Null on a miss, for callers that treat unknown names as skippable.
  ad::Var<T> try_find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? ad::Var<T>{} : it->second;
  }

  std::int64_t count(const std::string& prefix = "") const {
    std::int64_t total = 0;
    for (const auto& p : params_)
      if (p->name.rfind(prefix, 0) == 0) total += p->value.numel();
    return total;
  }

  void zero_grad() {
    for (const auto& p : params_) p->grad = Tensor<T>();
  }

  void describe(const std::string& line) { descriptor_ += line + "\n"; }
  const std::string& descriptor() const { return descriptor_; }

 private:
  ad::Var<T> insert(const std::string& name, Tensor<T> value) {
    if (by_name_.count(name)) throw ContractViolation("duplicate parameter name " + name);
    auto v = ad::parameter(std::move(value), name);
    params_.push_back(v);
    by_name_.emplace(name, v);
    return v;
  }

  std::uint64_t seed_;
  std::vector<ad::Var<T>> params_;
  std::map<std::string, ad::Var<T>> by_name_;
  std::string descriptor_;
};

inline std::string shape3(const std::array<std::int64_t, 3>& a) {
  return "(" + std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + ")";
}

template <typename T>
struct Conv {
  ad::Var<T> w;
  ad::Var<T> b;  // null for bias-free convolutions
  std::array<std::int64_t, 3> stride{1, 1, 1};
  std::array<std::int64_t, 3> dilation{1, 1, 1};
  ad::Var<T> apply(const ad::Var<T>& x) const { return ad::conv3d(x, w, b, stride, dilation); }
};

template <typename T>
Conv<T> make_conv(ParamStore<T>& ps, const std::string& name, std::int64_t cin, std::int64_t cout,
                  std::array<std::int64_t, 3> kernel, bool bias, std::array<std::int64_t, 3> stride = {1, 1, 1},
                  std::array<std::int64_t, 3> dilation = {1, 1, 1}) {
  Conv<T> l;
  l.stride = stride;
  l.dilation = dilation;
  const double fan_in = double(cin * kernel[0] * kernel[1] * kernel[2]);
  l.w = ps.gaussian(name + ".w", TensorShape{cout, cin, kernel[0], kernel[1], kernel[2]}, std::sqrt(2.0 / fan_in));
  if (bias) l.b = ps.filled(name + ".b", TensorShape{1, cout, 1, 1, 1}, T{0});
  ps.describe("conv " + name + " " + std::to_string(cin) + "->" + std::to_string(cout) + " k=" + shape3(kernel) +
              " s=" + shape3(stride) + " d=" + shape3(dilation) + " bias=" + (bias ? "1" : "0"));
  return l;
}

template <typename T>
struct Norm {
  ad::Var<T> gamma;
  ad::Var<T> beta;
  ad::Var<T> apply(const ad::Var<T>& x) const { return ad::norm(x, gamma, beta); }
};

/// residual_tail: the closing norm of a residual branch starts damped
/// (scale 0.1) so deep stacks behave like mildly perturbed identities at
/// initialization while still passing gradient everywhere.
template <typename T>
Norm<T> make_norm(ParamStore<T>& ps, const std::string& name, std::int64_t channels, bool residual_tail = false) {
  Norm<T> l;
  l.gamma = ps.filled(name + ".gamma", TensorShape{1, channels, 1, 1, 1}, residual_tail ? T(0.1) : T(1));
  l.beta = ps.filled(name + ".beta", TensorShape{1, channels, 1, 1, 1}, T{0});
  ps.describe("norm " + name + " c=" + std::to_string(channels) + (residual_tail ? " tail" : ""));
  return l;
}

template <typename T>
struct Bottleneck {
  Conv<T> c1, c2, c3;
  Norm<T> n1, n2, n3;
  std::optional<Conv<T>> proj;
  std::optional<Norm<T>> proj_norm;

  ad::Var<T> apply(const ad::Var<T>& x) const {
    auto h = ad::relu(n1.apply(c1.apply(x)));
    h = ad::relu(n2.apply(c2.apply(h)));
    h = n3.apply(c3.apply(h));
    auto skip = proj ? proj_norm->apply(proj->apply(x)) : x;
    return ad::relu(ad::add(h, skip));
  }
};

template <typename T>
Bottleneck<T> make_bottleneck(ParamStore<T>& ps, const std::string& name, std::int64_t cin, std::int64_t mid,
                              std::int64_t cout, std::array<std::int64_t, 3> stride, std::int64_t dilation) {
  Bottleneck<T> b;
  b.c1 = make_conv(ps, name + ".conv1", cin, mid, {1, 1, 1}, false);
  b.n1 = make_norm(ps, name + ".norm1", mid);
  b.c2 = make_conv(ps, name + ".conv2", mid, mid, {3, 3, 3}, false, stride, {dilation, dilation, dilation});
  b.n2 = make_norm(ps, name + ".norm2", mid);
  b.c3 = make_conv(ps, name + ".conv3", mid, cout, {1, 1, 1}, false);
  b.n3 = make_norm(ps, name + ".norm3", cout, true);
  if (cin != cout || stride != std::array<std::int64_t, 3>{1, 1, 1}) {
    b.proj = make_conv(ps, name + ".proj", cin, cout, {1, 1, 1}, false, stride);
    b.proj_norm = make_norm(ps, name + ".proj_norm", cout);
  }
  return b;
}

/// Residual refinement block: y = relu(x' + f(x')) where x' is a pointwise
/// reduction to the block width and f factorizes 3x3x3 into an in-plane
/// 3x3x1 conv and a through-plane 1x1x3 conv, each followed by a norm.
template <typename T>
struct Rrb {
  Conv<T> reduce, fa, fb;
  Norm<T> na, nb;

  ad::Var<T> apply(const ad::Var<T>& x) const {
    auto xp = reduce.apply(x);
    auto h = ad::relu(na.apply(fa.apply(xp)));
    h = nb.apply(fb.apply(h));
    return ad::relu(ad::add(xp, h));
  }
};

template <typename T>
Rrb<T> make_rrb(ParamStore<T>& ps, const std::string& name, std::int64_t cin, std::int64_t width) {
  Rrb<T> r;
  r.reduce = make_conv(ps, name + ".reduce", cin, width, {1, 1, 1}, true);
  r.fa = make_conv(ps, name + ".fa", width, width, {3, 3, 1}, false);
  r.na = make_norm(ps, name + ".na", width);
  r.fb = make_conv(ps, name + ".fb", width, width, {1, 1, 3}, false);
  r.nb = make_norm(ps, name + ".nb", width, true);
  return r;
}

/// Pyramid attention fusion: context from the encoder skip through three
/// kernel sizes, gated voxelwise by an attention map derived from the
/// upsampled decoder features, added to a pointwise encoder projection:
///   out = skip(enc) + sigmoid(att(dec_up)) * (p3 + p5 + p7)(enc).
template <typename T>
struct Pam {
  Conv<T> p3, p5, p7, att, skip;

  ad::Var<T> apply(const ad::Var<T>& enc, const ad::Var<T>& dec_up) const {
    const TensorShape a = enc->value.shape(), b = dec_up->value.shape();
    if (a.x != b.x || a.y != b.y || a.z != b.z || a.n != b.n)
      throw ShapeError("pam: encoder and decoder grids differ: " + a.str() + " vs " + b.str());
    auto pyramid = ad::add(ad::add(p3.apply(enc), p5.apply(enc)), p7.apply(enc));
    auto gate = ad::sigmoid(att.apply(dec_up));
    return ad::add(skip.apply(enc), ad::mul(gate, pyramid));
  }
};

template <typename T>
Pam<T> make_pam(ParamStore<T>& ps, const std::string& name, std::int64_t enc_c, std::int64_t dec_c,
                std::int64_t cout) {
  Pam<T> p;
  p.p3 = make_conv(ps, name + ".p3", enc_c, cout, {3, 3, 3}, true);
  p.p5 = make_conv(ps, name + ".p5", enc_c, cout, {5, 5, 3}, true);
  p.p7 = make_conv(ps, name + ".p7", enc_c, cout, {7, 7, 3}, true);
  p.att = make_conv(ps, name + ".att", dec_c, cout, {1, 1, 1}, true);
  p.skip = make_conv(ps, name + ".skip", enc_c, cout, {1, 1, 1}, true);
  return p;
}

template <typename T>
struct MleamOut {
  std::array<ad::Var<T>, 3> edge_preds;  // native scales, index 0 coarsest
  std::array<ad::Var<T>, 3> modulated;   // features gated by (1 + edge_pred)
  std::array<ad::Var<T>, 2> preds_full;  // levels 1 and 2 upsampled to the finest scale
};

/// Edge attention heads over the three decoder levels. Each level predicts
/// a single-channel edge map which multiplicatively modulates its own
/// features; the two coarse predictions are also upsampled to the finest
/// grid for the final fusion.
template <typename T>
struct Mleam {
  Conv<T> head1, head2, head3;

  MleamOut<T> apply(const ad::Var<T>& f1, const ad::Var<T>& f2, const ad::Var<T>& f3) const {
    MleamOut<T> out;
    out.edge_preds[0] = ad::sigmoid(head1.apply(f1));
    out.edge_preds[1] = ad::sigmoid(head2.apply(f2));
    out.edge_preds[2] = ad::sigmoid(head3.apply(f3));
    out.modulated[0] = ad::channel_gate(f1, out.edge_preds[0]);
    out.modulated[1] = ad::channel_gate(f2, out.edge_preds[1]);
    out.modulated[2] = ad::channel_gate(f3, out.edge_preds[2]);
    out.preds_full[0] = ad::upsample_nearest(out.edge_preds[0], {4, 4, 2});
    out.preds_full[1] = ad::upsample_nearest(out.edge_preds[1], {2, 2, 1});
    return out;
  }
};

template <typename T>
Mleam<T> make_mleam(ParamStore<T>& ps, const std::string& name, std::int64_t c1, std::int64_t c2, std::int64_t c3) {
  Mleam<T> m;
  m.head1 = make_conv(ps, name + ".head1", c1, 1, {1, 1, 1}, true);
  m.head2 = make_conv(ps, name + ".head2", c2, 1, {1, 1, 1}, true);
  m.head3 = make_conv(ps, name + ".head3", c3, 1, {1, 1, 1}, true);
  return m;
}

}  // namespace edgeseg::nn
