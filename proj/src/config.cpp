#include "edgeseg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edgeseg/edge.hpp"
#include "edgeseg/errors.hpp"

namespace edgeseg {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config: key '" + key + "' expects " + expected + ", got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value, "a number");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(key, value, "a number");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "a nonnegative integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value, "a boolean (true/false)");
}

template <typename T, typename Parse>
std::array<T, 3> parse_triple(const std::string& key, const std::string& value, Parse parse) {
  std::istringstream in(value);
  std::array<T, 3> out{};
  std::string token;
  for (int i = 0; i < 3; ++i) {
    if (!(in >> token)) bad_value(key, value, "three space-separated values");
    out[std::size_t(i)] = parse(key, token);
  }
  if (in >> token) bad_value(key, value, "three space-separated values");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string format_triple(const std::array<T, 3>& v) {
  std::string out;
  for (int i = 0; i < 3; ++i) {
    if (i) out += ' ';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[std::size_t(i)]);
    else
      out += std::to_string(v[std::size_t(i)]);
  }
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"seed", "master seed for initialization and sampling"},
      {"data.root", "directory holding Case*.mhd / Case*_segmentation.mhd pairs"},
      {"network.width_multiplier", "channel width scale of every layer"},
      {"edge.extractor", "edge target extractor: surface or haar"},
      {"augment.enabled", "B-spline deformation on or off"},
      {"augment.max_displacement", "control-point displacement bound, voxels"},
      {"augment.foreground_bias", "probability a crop is forced to contain foreground"},
      {"loss.weights", "three edge-loss weights, coarsest level first"},
      {"loss.eps_dice", "dice loss smoothing epsilon"},
      {"loss.eps_log", "cross-entropy clamp epsilon"},
      {"train.batch_size", "samples per optimizer step"},
      {"train.micro_batch", "samples per forward pass (accumulation)"},
      {"train.max_iterations", "optimizer steps to run"},
      {"train.checkpoint_every", "checkpoint cadence in steps, 0 disables"},
      {"train.patch_size", "training crop size, three integers"},
      {"train.base_lr", "explicit base learning rate, negative for mode default"},
      {"train.pretrain_lr_decay", "per-epoch decay factor in pretrain mode"},
      {"train.epoch_size", "iterations per epoch for the pretrain decay"},
      {"train.resume_from", "checkpoint path to resume training from"},
      {"infer.window", "sliding window size, three integers"},
      {"infer.stride", "sliding window stride, three integers"},
      {"infer.workers", "emulated worker count for stitching"},
  };
  return keys;
}

void set_config_value(RunSettings& s, const std::string& key, const std::string& value) {
  if (key == "seed") s.seed = parse_uint(key, value);
  else if (key == "data.root") s.data_root = value;
  else if (key == "network.width_multiplier") s.width_multiplier = parse_double(key, value);
  else if (key == "edge.extractor") {
    if (value != "surface" && value != "haar") bad_value(key, value, "'surface' or 'haar'");
    s.edge_extractor = value;
  } else if (key == "augment.enabled") s.augment_enabled = parse_bool(key, value);
  else if (key == "augment.max_displacement") s.max_displacement = parse_double(key, value);
  else if (key == "augment.foreground_bias") s.foreground_bias = parse_double(key, value);
  else if (key == "loss.weights") s.loss_weights = parse_triple<double>(key, value, parse_double);
  else if (key == "loss.eps_dice") s.eps_dice = parse_double(key, value);
  else if (key == "loss.eps_log") s.eps_log = parse_double(key, value);
  else if (key == "train.batch_size") s.batch_size = parse_int(key, value);
  else if (key == "train.micro_batch") s.micro_batch = parse_int(key, value);
  else if (key == "train.max_iterations") s.max_iterations = parse_int(key, value);
  else if (key == "train.checkpoint_every") s.checkpoint_every = parse_int(key, value);
  else if (key == "train.patch_size") s.patch_size = parse_triple<std::int64_t>(key, value, parse_int);
  else if (key == "train.base_lr") s.base_lr = parse_double(key, value);
  else if (key == "train.pretrain_lr_decay") s.pretrain_lr_decay = parse_bool(key, value);
  else if (key == "train.epoch_size") s.epoch_size = parse_int(key, value);
  else if (key == "train.resume_from") s.resume_from = value;
  else if (key == "infer.window") s.infer_window = parse_triple<std::int64_t>(key, value, parse_int);
  else if (key == "infer.stride") s.infer_stride = parse_triple<std::int64_t>(key, value, parse_int);
  else if (key == "infer.workers") s.infer_workers = int(parse_int(key, value));
  else throw ConfigError("config: unknown key '" + key + "'");
}

void load_config_file(RunSettings& settings, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_config_value(settings, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (" + path + ":" + std::to_string(line_no) + ")");
    }
  }
}

std::string render_config(const RunSettings& s) {
  std::string out;
  auto emit = [&out](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  emit("seed", std::to_string(s.seed));
  emit("data.root", s.data_root);
  emit("network.width_multiplier", format_double(s.width_multiplier));
  emit("edge.extractor", s.edge_extractor);
  emit("augment.enabled", s.augment_enabled ? "true" : "false");
  emit("augment.max_displacement", format_double(s.max_displacement));
  emit("augment.foreground_bias", format_double(s.foreground_bias));
  emit("loss.weights", format_triple(s.loss_weights));
  emit("loss.eps_dice", format_double(s.eps_dice));
  emit("loss.eps_log", format_double(s.eps_log));
  emit("train.batch_size", std::to_string(s.batch_size));
  emit("train.micro_batch", std::to_string(s.micro_batch));
  emit("train.max_iterations", std::to_string(s.max_iterations));
  emit("train.checkpoint_every", std::to_string(s.checkpoint_every));
  emit("train.patch_size", format_triple(s.patch_size));
  emit("train.base_lr", format_double(s.base_lr));
  emit("train.pretrain_lr_decay", s.pretrain_lr_decay ? "true" : "false");
  emit("train.epoch_size", std::to_string(s.epoch_size));
  emit("train.resume_from", s.resume_from);
  emit("infer.window", format_triple(s.infer_window));
  emit("infer.stride", format_triple(s.infer_stride));
  emit("infer.workers", std::to_string(s.infer_workers));
  return out;
}

NetworkConfig to_network_config(const RunSettings& s, ModelMode mode) {
  NetworkConfig nc;
  nc.mode = mode;
  nc.width_multiplier = s.width_multiplier;
  nc.seed = s.seed;
  return nc;
}

TrainConfig to_train_config(const RunSettings& s, ModelMode mode) {
  TrainConfig tc;
  tc.mode = mode;
  tc.seed = s.seed;
  tc.patch_size = s.patch_size;
  tc.batch_size = s.batch_size;
  tc.micro_batch = s.micro_batch;
  tc.max_iterations = s.max_iterations;
  tc.checkpoint_every = s.checkpoint_every;
  tc.max_displacement = s.augment_enabled ? s.max_displacement : 0.0;
  tc.foreground_bias = s.foreground_bias;
  tc.edge_extractor = s.edge_extractor == "haar" ? EdgeExtractor::haar : EdgeExtractor::surface;
  tc.loss.w = s.loss_weights;
  tc.loss.eps_dice = s.eps_dice;
  tc.loss.eps_log = s.eps_log;
  tc.base_lr = s.base_lr;
  tc.pretrain_lr_decay = s.pretrain_lr_decay;
  tc.epoch_size = s.epoch_size;
  tc.resume_from = s.resume_from;
  return tc;
}

InferenceConfig to_inference_config(const RunSettings& s) {
  InferenceConfig ic;
  ic.window = s.infer_window;
  ic.stride = s.infer_stride;
  ic.workers = s.infer_workers;
  return ic;
}

}  // namespace edgeseg
