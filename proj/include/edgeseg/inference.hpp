#pragma once

/// @file inference.hpp
/// @brief Whole-volume prediction by overlapping sliding windows with
///        uniform probability averaging, plus thresholding utilities.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "edgeseg/network.hpp"
#include "edgeseg/volume.hpp"

namespace edgeseg {

struct InferenceConfig {
  std::array<std::int64_t, 3> window{96, 96, 32};
  std::array<std::int64_t, 3> stride{24, 24, 8};
  int workers = 1;  // emulated: per-worker partial buffers, reduced in order

  void validate() const;
};

struct WindowPlan {
  std::array<std::int64_t, 3> window{96, 96, 32};
  std::array<std::int64_t, 3> stride{24, 24, 8};
  std::vector<std::array<std::int64_t, 3>> origins;
  std::array<std::int64_t, 3> padded_shape{};
};

// Regular origins 0, s, 2s, ... while origin + window <= dim, then one
// clamped origin dim - window when the regular grid stops short of the
// end. Axes shorter than the window are padded up before planning.
WindowPlan plan_windows(const std::array<std::int64_t, 3>& shape, const InferenceConfig& config = {});

// Maps one image window (1, 1, wx, wy, wz) to probabilities of the same
// shape. Exists so stitching can be exercised with stub predictors.
using WindowForward = std::function<Tensor<float>(const Tensor<float>&)>;

// Pads the volume to the plan's padded shape with its minimum value,
// forwards every window in plan order, and averages overlapping
// probabilities uniformly before cropping back to the input shape.
// Worker emulation keeps one partial accumulator per worker (windows
// assigned round-robin) and reduces them in worker order, so the result
// is independent of the emulated schedule.
Volume stitch_windows(const WindowForward& forward, const Volume& volume, const WindowPlan& plan,
                      int workers = 1);

// plan_windows + stitch_windows in one call.
Volume sliding_window_predict(const WindowForward& forward, const Volume& volume,
                              const InferenceConfig& config = {});

Volume sliding_window_predict(const ModelGraph<float>& model, const Volume& volume,
                              const InferenceConfig& config = {});

// voxel = 1 iff prob >= threshold; optionally keep only the largest
// 6-connected foreground component.
Volume binarize(const Volume& prob, float threshold = 0.5f, bool largest_component = false);

}  // namespace edgeseg
