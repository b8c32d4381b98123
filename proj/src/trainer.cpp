#include "edgeseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "edgeseg/edge.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {
namespace {

// Exact decade table so scheduled rates compare equal to decimal literals.
constexpr double kDecades[] = {1e0,  1e-1,  1e-2,  1e-3,  1e-4,  1e-5,  1e-6,  1e-7,  1e-8, 1e-9,
                               1e-10, 1e-11, 1e-12, 1e-13, 1e-14, 1e-15, 1e-16, 1e-17, 1e-18};
constexpr std::int64_t kMaxDecade = std::int64_t(std::size(kDecades)) - 1;

std::string checkpoint_name(std::int64_t iteration) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_%06lld.ckpt", static_cast<long long>(iteration));
  return buf;
}

void require_finite(float v, const char* term, std::int64_t iteration) {
  if (std::isfinite(v)) return;
  throw Error("training aborted at iteration " + std::to_string(iteration) + ": " + term +
              " loss is non-finite");
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size <= 0 || micro_batch <= 0) throw ConfigError("trainer: batch sizes must be positive");
  if (batch_size % micro_batch != 0) throw ConfigError("trainer: micro_batch must divide batch_size");
  if (max_iterations < 0) throw ConfigError("trainer: max_iterations must be nonnegative");
  if (checkpoint_every < 0) throw ConfigError("trainer: checkpoint cadence must be nonnegative");
  if (max_displacement < 0.0) throw ConfigError("trainer: max_displacement must be nonnegative");
  if (foreground_bias < 0.0 || foreground_bias > 1.0)
    throw ConfigError("trainer: foreground_bias must be in [0,1]");
  // base_lr: negative selects the mode default; zero is allowed (frozen run).
  if (epoch_size <= 0) throw ConfigError("trainer: epoch_size must be positive");
  for (std::int64_t d : patch_size)
    if (d <= 0) throw ConfigError("trainer: patch dimensions must be positive");
  loss.validate();
}

double lr_schedule(std::int64_t iteration, const TrainConfig& config) {
  if (iteration < 0) throw ContractViolation("lr_schedule: negative iteration");
  if (config.mode == ModelMode::full) {
    const std::int64_t k = iteration / 2000;
    if (config.base_lr >= 0.0) return config.base_lr * kDecades[std::min(k, kMaxDecade)];
    return kDecades[std::min(k + 3, kMaxDecade)];  // 0.001, 0.0001, ...
  }
  const double base = config.base_lr >= 0.0 ? config.base_lr : 0.01;
  if (!config.pretrain_lr_decay) return base;
  const double epoch = double(iteration / config.epoch_size);
  return base * std::pow(1.0 - 1e-6, epoch);
}

Trainer::Trainer(ModelGraph<float>& model, std::vector<TrainingCase> data, TrainConfig config,
                 std::string run_dir)
    : model_(model),
      data_(std::move(data)),
      config_(std::move(config)),
      run_dir_(std::move(run_dir)),
      optimizer_(
          [&] {
            OptimizerConfig oc;
            if (config_.mode == ModelMode::full) {
              oc.kind = OptimizerKind::adam;
              oc.beta1 = 0.9;
              oc.beta2 = 0.999;
            } else {
              oc.kind = OptimizerKind::sgd;
              oc.momentum = 0.9;
              oc.weight_decay = 1e-6;
            }
            return oc;
          }(),
          model.parameters()) {
  config_.validate();
  if (model_.config().mode != config_.mode)
    throw ContractViolation("trainer: model mode does not match the training mode");
  if (data_.empty()) throw ConfigError("trainer: dataset is empty");
  for (const auto& c : data_) {
    c.image.validate();
    c.label.validate();
    if (c.image.size != c.label.size) throw ContractViolation("trainer: image/label shape mismatch");
  }
  if (!run_dir_.empty()) std::filesystem::create_directories(run_dir_);

  if (!config_.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(config_.resume_from);
    if (ck.seed != config_.seed)
      throw LoadError("resume: checkpoint seed does not match the configured seed");
    restore_model(model_, ck);
    for (const auto& slot : optimizer_.slots()) {
      const Tensor<float>* src = ck.find(slot.name);
      if (!src) throw LoadError("resume: checkpoint is missing optimizer state " + slot.name);
      if (!(src->shape() == slot.tensor->shape()))
        throw LoadError("resume: optimizer state shape mismatch for " + slot.name);
      *slot.tensor = *src;
    }
    optimizer_.set_steps(ck.optimizer_steps);
    iteration_ = ck.iteration;
  }
}

Patch Trainer::draw_patch(std::int64_t slot) const {
  const auto it = static_cast<std::uint64_t>(iteration_);
  const auto s = static_cast<std::uint64_t>(slot);
  const TrainingCase& chosen =
      data_[std::size_t(rng::pick(data_.size(), config_.seed, rng::kVolumePick, it, s))];
  if (config_.max_displacement > 0.0) {
    const DeformationField field = sample_bspline_field(
        chosen.image.size, config_.max_displacement, rng::key(config_.seed, rng::kDeformSeed, it, s));
    return random_crop(warp(chosen.image, field), warp(chosen.label, field), config_.patch_size,
                       rng::key(config_.seed, rng::kCropSeed, it, s), config_.foreground_bias);
  }
  return random_crop(chosen.image, chosen.label, config_.patch_size,
                     rng::key(config_.seed, rng::kCropSeed, it, s), config_.foreground_bias);
}

Tensor<float> Trainer::stack_patches(const std::vector<Volume>& patches) const {
  const auto& s = patches.front().size;
  Tensor<float> out(TensorShape{std::int64_t(patches.size()), 1, s[0], s[1], s[2]});
  for (std::size_t n = 0; n < patches.size(); ++n) {
    if (patches[n].size != s) throw ContractViolation("trainer: ragged patch batch");
    std::memcpy(out.channel(std::int64_t(n), 0), patches[n].data.data(),
                sizeof(float) * std::size_t(out.shape().voxels()));
  }
  return out;
}

StepRecord Trainer::full_step(double lr) {
  const std::int64_t num_micro = config_.batch_size / config_.micro_batch;
  const float scale = 1.0f / float(num_micro);
  StepRecord rec;
  model_.zero_grad();
  for (std::int64_t m = 0; m < num_micro; ++m) {
    std::vector<Volume> images, labels;
    std::array<std::vector<Volume>, 3> edge_levels;
    for (std::int64_t j = 0; j < config_.micro_batch; ++j) {
      Patch p = draw_patch(m * config_.micro_batch + j);
      EdgeMapSet edges = make_edge_targets(p.label, config_.edge_extractor);
      images.push_back(std::move(p.image));
      labels.push_back(std::move(p.label));
      for (int lvl = 0; lvl < 3; ++lvl)
        edge_levels[std::size_t(lvl)].push_back(std::move(edges.levels[std::size_t(lvl)]));
    }
    const Tensor<float> x = stack_patches(images);
    const Tensor<float> y = stack_patches(labels);
    std::array<Tensor<float>, 3> edge_targets{stack_patches(edge_levels[0]),
                                              stack_patches(edge_levels[1]),
                                              stack_patches(edge_levels[2])};

    const ForwardOutput<float> out = model_.forward(x);
    std::array<Tensor<float>, 3> edge_probs{out.edge_preds[0]->value, out.edge_preds[1]->value,
                                            out.edge_preds[2]->value};
    const TotalLossResult<float> loss = total_loss(out.prob->value, y, edge_probs, edge_targets,
                                                   config_.loss);
    require_finite(loss.dice, "dice", iteration_);
    for (int lvl = 0; lvl < 3; ++lvl)
      require_finite(loss.edge[std::size_t(lvl)],
                     lvl == 0 ? "edge1" : lvl == 1 ? "edge2" : "edge3", iteration_);

    std::vector<std::pair<ad::Var<float>, Tensor<float>>> seeds;
    Tensor<float> gp = loss.grad_prob;
    for (std::int64_t i = 0; i < gp.numel(); ++i) gp[i] *= scale;
    seeds.emplace_back(out.prob, std::move(gp));
    for (int lvl = 0; lvl < 3; ++lvl) {
      Tensor<float> ge = loss.grad_edge[std::size_t(lvl)];
      for (std::int64_t i = 0; i < ge.numel(); ++i) ge[i] *= scale;
      seeds.emplace_back(out.edge_preds[std::size_t(lvl)], std::move(ge));
    }
    ad::backward(seeds);

    rec.total += loss.total * scale;
    rec.dice += loss.dice * scale;
    for (int lvl = 0; lvl < 3; ++lvl) rec.edge[std::size_t(lvl)] += loss.edge[std::size_t(lvl)] * scale;
  }
  optimizer_.step(lr);
  return rec;
}

StepRecord Trainer::pretrain_step(double lr) {
  const std::int64_t num_micro = config_.batch_size / config_.micro_batch;
  const float scale = 1.0f / float(num_micro);
  StepRecord rec;
  model_.zero_grad();
  for (std::int64_t m = 0; m < num_micro; ++m) {
    std::vector<Volume> images, labels;
    for (std::int64_t j = 0; j < config_.micro_batch; ++j) {
      Patch p = draw_patch(m * config_.micro_batch + j);
      images.push_back(std::move(p.image));
      labels.push_back(std::move(p.label));
    }
    const Tensor<float> x = stack_patches(images);
    const Tensor<float> y = stack_patches(labels);
    const ad::Var<float> prob = model_.forward_pretrain(x);
    const LossResult<float> loss = cross_entropy(prob->value, y, config_.loss.eps_log);
    require_finite(loss.value, "cross-entropy", iteration_);

    Tensor<float> g = loss.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
    std::vector<std::pair<ad::Var<float>, Tensor<float>>> seeds;
    seeds.emplace_back(prob, std::move(g));
    ad::backward(seeds);

    rec.total += loss.value * scale;
    rec.dice += loss.value * scale;
  }
  optimizer_.step(lr);
  return rec;
}

StepRecord Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const double lr = lr_schedule(iteration_, config_);
  StepRecord rec = config_.mode == ModelMode::full ? full_step(lr) : pretrain_step(lr);
  rec.iteration = iteration_;
  rec.lr = lr;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ++iteration_;
  append_log(rec);
  return rec;
}

std::string Trainer::checkpoint_now() {
  if (run_dir_.empty()) throw ContractViolation("trainer: no run directory for checkpoints");
  Checkpoint ck;
  ck.topology_hash = model_.topology_hash();
  ck.encoder_hash = model_.encoder_hash();
  ck.seed = config_.seed;
  ck.iteration = iteration_;
  ck.optimizer_steps = optimizer_.steps();
  for (const auto& p : model_.parameters()) ck.tensors.push_back({p->name, p->value});
  for (const auto& slot : optimizer_.slots()) ck.tensors.push_back({slot.name, *slot.tensor});
  const std::string path = run_dir_ + "/" + checkpoint_name(iteration_);
  save_checkpoint(path, ck);
  return path;
}

TrainResult Trainer::run() {
  TrainResult result;
  std::int64_t last_saved = -1;
  if (config_.max_iterations == 0 && !run_dir_.empty()) {
    result.final_checkpoint = checkpoint_now();
    return result;
  }
  while (iteration_ < config_.max_iterations) {
    result.steps.push_back(step());
    if (!run_dir_.empty() && config_.checkpoint_every > 0 &&
        iteration_ % config_.checkpoint_every == 0) {
      result.final_checkpoint = checkpoint_now();
      last_saved = iteration_;
    }
  }
  if (!run_dir_.empty() && last_saved != iteration_) result.final_checkpoint = checkpoint_now();
  return result;
}

void Trainer::append_log(const StepRecord& rec) const {
  if (run_dir_.empty()) return;
  nlohmann::json j{{"iteration", rec.iteration}, {"lr", rec.lr},       {"total", rec.total},
                   {"dice", rec.dice},           {"edge1", rec.edge[0]}, {"edge2", rec.edge[1]},
                   {"edge3", rec.edge[2]},       {"wall_ms", rec.wall_ms}};
  std::ofstream out(run_dir_ + "/train_log.jsonl", std::ios::app);
  out << j.dump() << "\n";
}

}  // namespace edgeseg
