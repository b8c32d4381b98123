/// @file trainer.hpp
/// @brief Training loops for both model modes: schedules, accumulation,
///        online augmentation, checkpointing, structured logging.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/augment.hpp"
#include "edgeseg/checkpoint.hpp"
#include "edgeseg/edge.hpp"
#include "edgeseg/losses.hpp"
#include "edgeseg/network.hpp"
#include "edgeseg/optimizer.hpp"
#include "edgeseg/volume.hpp"

namespace edgeseg {

struct TrainingCase {
  Volume image;
  Volume label;
};

struct TrainConfig {
  ModelMode mode = ModelMode::full;
  std::uint64_t seed = 0;
  std::array<std::int64_t, 3> patch_size = kPatchSize;
  std::int64_t batch_size = 16;  // effective batch per optimizer step
  std::int64_t micro_batch = 1;  // samples per forward/backward pass
  std::int64_t max_iterations = 6000;
  std::int64_t checkpoint_every = 500;

  // Augmentation: off when max_displacement is 0.
  double max_displacement = 4.0;
  double foreground_bias = 0.5;

  LossWeights loss;
  EdgeExtractor edge_extractor = EdgeExtractor::surface;

  // Full mode: Adam(0.9, 0.999), initial lr 1e-3 stepping down a decade
  // every 2000 iterations. Pretrain: SGD momentum 0.9, weight decay 1e-6,
  // constant lr 0.01; the multiplicative per-epoch decay reading is
  // available behind pretrain_lr_decay.
  double base_lr = -1.0;  // < 0 picks the mode default
  bool pretrain_lr_decay = false;
  std::int64_t epoch_size = 50;  // volumes per epoch, for the decay reading

  std::string resume_from;  // checkpoint path; empty = fresh start

  void validate() const;
};

double lr_schedule(std::int64_t iteration, const TrainConfig& config);

struct StepRecord {
  std::int64_t iteration = 0;  // index of the step just taken, counting from 0
  double lr = 0.0;
  float total = 0.0f;
  float dice = 0.0f;               // full mode; cross-entropy in pretrain mode
  std::array<float, 3> edge{};     // full mode only
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::string final_checkpoint;
};

class Trainer {
 public:
  // run_dir may be empty: no checkpoints or log files are written then.
  Trainer(ModelGraph<float>& model, std::vector<TrainingCase> data, TrainConfig config,
          std::string run_dir);

  // One optimizer step: accumulate batch_size/micro_batch backward passes,
  // update, advance the iteration counter.
  StepRecord step();

  // Steps to max_iterations, checkpointing on cadence and at the end.
  TrainResult run();

  std::int64_t iteration() const { return iteration_; }
  std::string checkpoint_now();  // writes checkpoint_<iteration>.ckpt

 private:
  Tensor<float> stack_patches(const std::vector<Volume>& patches) const;
  StepRecord full_step(double lr);
  StepRecord pretrain_step(double lr);
  Patch draw_patch(std::int64_t slot) const;
  void append_log(const StepRecord& rec) const;

  ModelGraph<float>& model_;
  std::vector<TrainingCase> data_;
  TrainConfig config_;
  std::string run_dir_;
  Optimizer<float> optimizer_;
  std::int64_t iteration_ = 0;
};

}  // namespace edgeseg
