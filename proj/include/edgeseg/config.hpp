#pragma once

/// @file config.hpp
/// @brief Line-oriented dotted-key configuration: one "key = value" per
///        line, merged from file plus flag overrides, echoed back out for
///        reproducible runs.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "edgeseg/inference.hpp"
#include "edgeseg/network.hpp"
#include "edgeseg/trainer.hpp"

namespace edgeseg {

// Every tunable the pipelines consume, with the shipped defaults.
struct RunSettings {
  std::uint64_t seed = 0;
  std::string data_root;

  double width_multiplier = 1.0;
  std::string edge_extractor = "surface";  // or "haar"

  bool augment_enabled = true;
  double max_displacement = 4.0;
  double foreground_bias = 0.5;

  std::array<double, 3> loss_weights{0.5, 0.8, 1.0};
  double eps_dice = 1e-5;
  double eps_log = 1e-7;

  std::int64_t batch_size = 16;
  std::int64_t micro_batch = 1;
  std::int64_t max_iterations = 6000;
  std::int64_t checkpoint_every = 500;
  std::array<std::int64_t, 3> patch_size{96, 96, 32};
  double base_lr = -1.0;  // negative keeps the mode default
  bool pretrain_lr_decay = false;
  std::int64_t epoch_size = 50;
  std::string resume_from;

  std::array<std::int64_t, 3> infer_window{96, 96, 32};
  std::array<std::int64_t, 3> infer_stride{24, 24, 8};
  int infer_workers = 1;
};

// The known keys in render order, with one-line descriptions for --help.
const std::vector<std::pair<std::string, std::string>>& config_keys();

// Assigns one key; unknown keys and unparsable values raise ConfigError
// naming the key.
void set_config_value(RunSettings& settings, const std::string& key, const std::string& value);

// Reads "key = value" lines; '#' starts a comment, blank lines are
// skipped. Errors carry the path and line number.
void load_config_file(RunSettings& settings, const std::string& path);

// Full settings echo; parsing the rendered text reproduces the settings.
std::string render_config(const RunSettings& settings);

// Materialized module configs.
NetworkConfig to_network_config(const RunSettings& settings, ModelMode mode);
TrainConfig to_train_config(const RunSettings& settings, ModelMode mode);
InferenceConfig to_inference_config(const RunSettings& settings);

}  // namespace edgeseg
