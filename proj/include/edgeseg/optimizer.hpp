#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/autograd.hpp"
#include "edgeseg/errors.hpp"

namespace edgeseg {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double momentum = 0.9;        // sgd
  double beta1 = 0.9;           // adam
  double beta2 = 0.999;         // adam
  double eps = 1e-8;            // adam
  double weight_decay = 0.0;    // L2 term added to the gradient

  void validate() const {
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optimizer: momentum must be in [0,1)");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw ConfigError("optimizer: betas must be in (0,1)");
    if (eps <= 0.0) throw ConfigError("optimizer: eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("optimizer: weight decay must be nonnegative");
  }
};

// One named state tensor, exposed so checkpoints can serialize optimizer
// state next to the parameters it belongs to.
template <typename T>
struct OptimizerSlot {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<ad::Var<T>> params)
      : config_(config), params_(std::move(params)) {
    config_.validate();
    const bool adam = config_.kind == OptimizerKind::adam;
    for (const auto& p : params_) {
      m_.emplace_back(p->value.shape(), T(0));
      if (adam) v_.emplace_back(p->value.shape(), T(0));
    }
  }

  // One update over all parameters from their accumulated gradients.
  void step(double lr) {
    if (lr < 0.0) throw ContractViolation("optimizer: negative learning rate");
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i]->value;
      const auto& g = params_[i]->grad;
      if (g.empty()) continue;
      if (config_.kind == OptimizerKind::sgd) {
        for (std::int64_t j = 0; j < p.numel(); ++j) {
          const double gj = double(g[j]) + config_.weight_decay * double(p[j]);
          const double vj = config_.momentum * double(m_[i][j]) + gj;
          m_[i][j] = T(vj);
          p[j] = T(double(p[j]) - lr * vj);
        }
      } else {
        const double c1 = 1.0 - std::pow(config_.beta1, double(steps_));
        const double c2 = 1.0 - std::pow(config_.beta2, double(steps_));
        for (std::int64_t j = 0; j < p.numel(); ++j) {
          const double gj = double(g[j]) + config_.weight_decay * double(p[j]);
          const double mj = config_.beta1 * double(m_[i][j]) + (1.0 - config_.beta1) * gj;
          const double vj = config_.beta2 * double(v_[i][j]) + (1.0 - config_.beta2) * gj * gj;
          m_[i][j] = T(mj);
          v_[i][j] = T(vj);
          p[j] = T(double(p[j]) - lr * (mj / c1) / (std::sqrt(vj / c2) + config_.eps));
        }
      }
    }
  }

  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t n) {
    if (n < 0) throw ContractViolation("optimizer: negative step count");
    steps_ = n;
  }

  const OptimizerConfig& config() const { return config_; }

  // State tensors named after their parameter, for checkpointing.
  std::vector<OptimizerSlot<T>> slots() {
    std::vector<OptimizerSlot<T>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.push_back({"opt.m." + params_[i]->name, &m_[i]});
      if (config_.kind == OptimizerKind::adam) out.push_back({"opt.v." + params_[i]->name, &v_[i]});
    }
    return out;
  }

 private:
  OptimizerConfig config_;
  std::vector<ad::Var<T>> params_;
  std::vector<Tensor<T>> m_;  // sgd momentum buffer / adam first moment
  std::vector<Tensor<T>> v_;  // adam second moment
  std::int64_t steps_ = 0;
};

}  // namespace edgeseg
