#pragma once

/// @file network.hpp
/// The segmentation model: a dilated 3D residual bottleneck encoder with a
/// multi-scale decoder built from residual refinement blocks, pyramid
/// attention fusion of the encoder skips, and edge attention heads at
/// three scales whose predictions join the final classifier. A pretraining
/// mode swaps the decoder for a small upsampling head on the same encoder.

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "edgeseg/nn.hpp"

namespace edgeseg {

enum class ModelMode { pretrain, full };

inline const char* to_string(ModelMode m) { return m == ModelMode::pretrain ? "pretrain" : "full"; }

struct NetworkConfig {
  ModelMode mode = ModelMode::full;
  double width_multiplier = 1.0;
  std::array<std::int64_t, 4> block_depths{3, 4, 23, 3};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(width_multiplier > 0.0)) throw ContractViolation("NetworkConfig: width_multiplier must be > 0");
    for (std::int64_t d : block_depths)
      if (d < 1) throw ContractViolation("NetworkConfig: block depths must be >= 1");
  }
};

template <typename T>
struct ForwardOutput {
  ad::Var<T> prob;                       // (N, 1, X, Y, Z), sigmoid output
  std::array<ad::Var<T>, 3> edge_preds;  // index 0 = coarsest scale
};

// 64-bit FNV-1a over a topology descriptor.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
class ModelGraph {
 public:
  explicit ModelGraph(const NetworkConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    cfg_.validate();
    build();
    topology_hash_ = fnv1a("mode=" + std::string(to_string(cfg_.mode)) + "\n" + store_.descriptor());
    std::string enc;
    std::istringstream in(store_.descriptor());
    for (std::string line; std::getline(in, line);)
      if (line.rfind("encoder.", 0) == 0 || line.rfind("conv encoder.", 0) == 0 ||
          line.rfind("norm encoder.", 0) == 0 || line.rfind("pool encoder.", 0) == 0)
        enc += line + "\n";
    encoder_hash_ = fnv1a(enc);
  }

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<ad::Var<T>>& parameters() const { return store_.all(); }
  ad::Var<T> find_parameter(const std::string& name) const { return store_.find(name); }
  ad::Var<T> try_find_parameter(const std::string& name) const { return store_.try_find(name); }
  std::int64_t parameter_count(const std::string& prefix = "") const { return store_.count(prefix); }
  void zero_grad() { store_.zero_grad(); }
  const std::string& topology_descriptor() const { return store_.descriptor(); }
  std::uint64_t topology_hash() const { return topology_hash_; }
  std::uint64_t encoder_hash() const { return encoder_hash_; }
  std::int64_t forward_count() const { return forward_count_; }

  // Spatial divisibility demanded by the encoder's cumulative strides.
  static void check_input_shape(const TensorShape& s) {
    if (s.c != 1) throw ShapeError("model input must have one channel, got " + s.str());
    if (s.x % 8 != 0 || s.y % 8 != 0 || s.z % 4 != 0)
      throw ShapeError("model input needs x,y divisible by 8 and z by 4, got " + s.str());
    if (s.x < 8 || s.y < 8 || s.z < 4) throw ShapeError("model input too small: " + s.str());
  }

  /// Runs only the encoder trunk; exposed for the transfer workflow and
  /// shape diagnostics. Returns {stem tap, block1 tap, final features} at
  /// cumulative strides (2,2,1), (4,4,2), (8,8,4).
  std::array<ad::Var<T>, 3> encoder_forward(const Tensor<T>& patch) const {
    check_input_shape(patch.shape());
    return encode(ad::constant(patch));
  }

  /// Full-mode forward: segmentation probabilities plus the three edge
  /// predictions (coarsest first, at input/(4,4,2), /(2,2,1), /(1,1,1)).
  ForwardOutput<T> forward(const Tensor<T>& patch) const {
    if (cfg_.mode != ModelMode::full) throw ContractViolation("forward: graph was built in pretrain mode");
    check_input_shape(patch.shape());
    ++forward_count_;
    auto [t0, e1, e4] = encode(ad::constant(patch));

    // Bottom of the U: reduce the widest encoder features, then refine.
    auto d0 = rrb_d0_.apply(d0_in_.apply(e4));

    auto u1 = ad::upsample_nearest(d0, {2, 2, 2});
    auto d1 = rrb_l1_.apply(ad::concat_channels<T>({pam_l1_.apply(e1, u1), u1}));

    auto u2 = ad::upsample_nearest(d1, {2, 2, 2});
    auto d2 = rrb_l2_.apply(ad::concat_channels<T>({pam_l2_.apply(t0, u2), u2}));

    auto u3 = ad::upsample_nearest(d2, {2, 2, 1});
    auto d3 = rrb_l3_.apply(u3);

    const nn::MleamOut<T> edges = mleam_.apply(d1, d2, d3);
    auto fused = ad::concat_channels<T>(
        {edges.modulated[2], edges.preds_full[0], edges.preds_full[1], edges.edge_preds[2]});
    auto prob = ad::sigmoid(fusion_.apply(fused));
    return ForwardOutput<T>{prob, edges.edge_preds};
  }

  /// Pretrain-mode forward: encoder plus the small upsampling decoder.
  ad::Var<T> forward_pretrain(const Tensor<T>& patch) const {
    if (cfg_.mode != ModelMode::pretrain)
      throw ContractViolation("forward_pretrain: graph was built in full mode");
    check_input_shape(patch.shape());
    ++forward_count_;
    auto [t0, e1, e4] = encode(ad::constant(patch));
    (void)t0;
    (void)e1;
    auto h = e4;
    static constexpr std::array<std::array<std::int64_t, 3>, 3> kFactors{{{2, 2, 2}, {2, 2, 2}, {2, 2, 1}}};
    for (std::size_t i = 0; i < pre_stages_.size(); ++i) {
      h = ad::upsample_nearest(h, kFactors[i]);
      h = ad::relu(pre_stages_[i].n.apply(pre_stages_[i].c.apply(h)));
    }
    return ad::sigmoid(pre_out_.apply(h));
  }

 private:
  struct PretrainStage {
    nn::Conv<T> c;
    nn::Norm<T> n;
  };

  std::int64_t scaled(std::int64_t base) const {
    return std::max<std::int64_t>(1, std::llround(double(base) * cfg_.width_multiplier));
  }

  void build() {
    const std::int64_t stem_c = scaled(64);
    stem_conv_ = nn::make_conv(store_, "encoder.stem.conv", 1, stem_c, {7, 7, 7}, false, {2, 2, 1});
    stem_norm_ = nn::make_norm(store_, "encoder.stem.norm", stem_c);
    store_.describe("pool encoder.pool k=3 s=(2,2,2) p=1");

    struct BlockPlan {
      std::int64_t mid, out, dilation;
      std::array<std::int64_t, 3> first_stride;
    };
    const BlockPlan plans[4] = {
        {scaled(64), scaled(256), 1, {1, 1, 1}},
        {scaled(128), scaled(512), 1, {2, 2, 2}},
        {scaled(256), scaled(1024), 2, {1, 1, 1}},
        {scaled(512), scaled(2048), 4, {1, 1, 1}},
    };
    std::int64_t in_c = stem_c;
    for (int blk = 0; blk < 4; ++blk) {
      const BlockPlan& plan = plans[blk];
      std::vector<nn::Bottleneck<T>> units;
      for (std::int64_t u = 0; u < cfg_.block_depths[std::size_t(blk)]; ++u) {
        const auto stride = u == 0 ? plan.first_stride : std::array<std::int64_t, 3>{1, 1, 1};
        units.push_back(nn::make_bottleneck(store_,
                                            "encoder.block" + std::to_string(blk + 1) + ".unit" +
                                                std::to_string(u + 1),
                                            in_c, plan.mid, plan.out, stride, plan.dilation));
        in_c = plan.out;
      }
      blocks_[std::size_t(blk)] = std::move(units);
    }

    const std::int64_t e1_c = scaled(256), e4_c = scaled(2048);
    if (cfg_.mode == ModelMode::full) {
      const std::int64_t d0_c = scaled(256), d1_c = scaled(128), d2_c = scaled(64), d3_c = scaled(32);
      d0_in_ = nn::make_conv(store_, "decoder.d0.in", e4_c, d0_c, {1, 1, 1}, true);
      rrb_d0_ = nn::make_rrb(store_, "decoder.d0.rrb", d0_c, d0_c);
      pam_l1_ = nn::make_pam(store_, "decoder.lvl1.pam", e1_c, d0_c, d1_c);
      rrb_l1_ = nn::make_rrb(store_, "decoder.lvl1.rrb", d1_c + d0_c, d1_c);
      pam_l2_ = nn::make_pam(store_, "decoder.lvl2.pam", stem_c, d1_c, d2_c);
      rrb_l2_ = nn::make_rrb(store_, "decoder.lvl2.rrb", d2_c + d1_c, d2_c);
      rrb_l3_ = nn::make_rrb(store_, "decoder.lvl3.rrb", d2_c, d3_c);
      mleam_ = nn::make_mleam(store_, "mleam", d1_c, d2_c, d3_c);
      fusion_ = nn::make_conv(store_, "fusion.out", d3_c + 3, 1, {1, 1, 1}, true);
    } else {
      const std::int64_t widths[4] = {e4_c, scaled(64), scaled(32), scaled(16)};
      for (int i = 0; i < 3; ++i) {
        PretrainStage st;
        const std::string name = "pretrain.stage" + std::to_string(i + 1);
        st.c = nn::make_conv(store_, name + ".conv", widths[i], widths[i + 1], {3, 3, 3}, false);
        st.n = nn::make_norm(store_, name + ".norm", widths[i + 1]);
        pre_stages_.push_back(std::move(st));
      }
      pre_out_ = nn::make_conv(store_, "pretrain.out", widths[3], 1, {1, 1, 1}, true);
    }
  }

  // Shared encoder trunk. Returns the stem tap (full stride (2,2,1)), the
  // block1 tap (stride (4,4,2)), and the final features (stride (8,8,4)).
  std::array<ad::Var<T>, 3> encode(const ad::Var<T>& x) const {
    auto t0 = ad::relu(stem_norm_.apply(stem_conv_.apply(x)));
    auto h = ad::maxpool3d(t0, 3, {2, 2, 2}, 1);
    for (const auto& unit : blocks_[0]) h = unit.apply(h);
    auto e1 = h;
    for (const auto& unit : blocks_[1]) h = unit.apply(h);
    for (const auto& unit : blocks_[2]) h = unit.apply(h);
    for (const auto& unit : blocks_[3]) h = unit.apply(h);
    return {t0, e1, h};
  }

  NetworkConfig cfg_;
  nn::ParamStore<T> store_;
  std::uint64_t topology_hash_ = 0;
  std::uint64_t encoder_hash_ = 0;
  mutable std::int64_t forward_count_ = 0;

  nn::Conv<T> stem_conv_;
  nn::Norm<T> stem_norm_;
  std::array<std::vector<nn::Bottleneck<T>>, 4> blocks_;

  nn::Conv<T> d0_in_;
  nn::Rrb<T> rrb_d0_, rrb_l1_, rrb_l2_, rrb_l3_;
  nn::Pam<T> pam_l1_, pam_l2_;
  nn::Mleam<T> mleam_;
  nn::Conv<T> fusion_;

  std::vector<PretrainStage> pre_stages_;
  nn::Conv<T> pre_out_;
};

}  // namespace edgeseg
