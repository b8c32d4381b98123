#include "edgeseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "edgeseg/errors.hpp"

namespace edgeseg {
namespace {

std::vector<std::int64_t> axis_origins(std::int64_t dim, std::int64_t window, std::int64_t stride) {
  std::vector<std::int64_t> out;
  for (std::int64_t o = 0; o + window <= dim; o += stride) out.push_back(o);
  if (out.empty() || out.back() + window < dim) out.push_back(dim - window);
  return out;
}

}  // namespace

void InferenceConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (window[a] <= 0) throw ConfigError("inference: window dimensions must be positive");
    if (stride[a] <= 0) throw ConfigError("inference: stride must be positive");
  }
  if (workers < 1) throw ConfigError("inference: worker count must be >= 1");
}

WindowPlan plan_windows(const std::array<std::int64_t, 3>& shape, const InferenceConfig& config) {
  config.validate();
  for (std::int64_t d : shape)
    if (d <= 0) throw ContractViolation("plan_windows: shape dimensions must be positive");

  WindowPlan plan;
  plan.window = config.window;
  plan.stride = config.stride;
  std::array<std::vector<std::int64_t>, 3> per_axis;
  for (int a = 0; a < 3; ++a) {
    plan.padded_shape[a] = std::max(shape[a], config.window[a]);
    per_axis[a] = axis_origins(plan.padded_shape[a], config.window[a], config.stride[a]);
  }
  for (std::int64_t oz : per_axis[2])
    for (std::int64_t oy : per_axis[1])
      for (std::int64_t ox : per_axis[0]) plan.origins.push_back({ox, oy, oz});
  return plan;
}

Volume stitch_windows(const WindowForward& forward, const Volume& volume, const WindowPlan& plan,
                      int workers) {
  volume.validate();
  if (workers < 1) throw ConfigError("inference: worker count must be >= 1");
  const auto& pad = plan.padded_shape;
  const auto& win = plan.window;
  for (int a = 0; a < 3; ++a)
    if (pad[a] < volume.size[a])
      throw ContractViolation("stitch_windows: plan's padded shape is smaller than the volume");
  for (const auto& o : plan.origins)
    for (int a = 0; a < 3; ++a)
      if (o[a] < 0 || o[a] + win[a] > pad[a])
        throw ContractViolation("stitch_windows: window origin out of the padded bounds");

  float pad_value = volume.data.empty() ? 0.0f : volume.data[0];
  for (float v : volume.data) pad_value = std::min(pad_value, v);

  Volume padded(pad[0], pad[1], pad[2], VolumeKind::image, pad_value);
  padded.spacing = volume.spacing;
  padded.origin = volume.origin;
  for (std::int64_t z = 0; z < volume.size[2]; ++z)
    for (std::int64_t y = 0; y < volume.size[1]; ++y)
      for (std::int64_t x = 0; x < volume.size[0]; ++x) padded.at(x, y, z) = volume.at(x, y, z);

  // One partial accumulator per emulated worker; windows go to workers
  // round-robin and the partials are reduced in worker order, which pins
  // the result regardless of how a real pool would interleave them.
  const std::size_t buffer_len = std::size_t(pad[0] * pad[1] * pad[2]);
  std::vector<std::vector<double>> partial_sum(std::size_t(workers), std::vector<double>(buffer_len, 0.0));
  std::vector<std::vector<std::int32_t>> partial_count(std::size_t(workers),
                                                       std::vector<std::int32_t>(buffer_len, 0));

  Tensor<float> patch(TensorShape{1, 1, win[0], win[1], win[2]});
  for (std::size_t i = 0; i < plan.origins.size(); ++i) {
    const auto& o = plan.origins[i];
    for (std::int64_t z = 0; z < win[2]; ++z)
      for (std::int64_t y = 0; y < win[1]; ++y)
        for (std::int64_t x = 0; x < win[0]; ++x)
          patch.at(0, 0, x, y, z) = padded.at(o[0] + x, o[1] + y, o[2] + z);

    const Tensor<float> prob = forward(patch);
    if (!(prob.shape() == patch.shape()))
      throw ShapeError("sliding_window_predict: forward returned " + prob.shape().str() +
                       " for window " + patch.shape().str());

    auto& sum = partial_sum[i % std::size_t(workers)];
    auto& count = partial_count[i % std::size_t(workers)];
    for (std::int64_t z = 0; z < win[2]; ++z)
      for (std::int64_t y = 0; y < win[1]; ++y)
        for (std::int64_t x = 0; x < win[0]; ++x) {
          const std::size_t at = std::size_t((o[2] + z) * pad[1] * pad[0] + (o[1] + y) * pad[0] + (o[0] + x));
          sum[at] += double(prob.at(0, 0, x, y, z));
          count[at] += 1;
        }
  }

  for (int w = 1; w < workers; ++w)
    for (std::size_t j = 0; j < buffer_len; ++j) {
      partial_sum[0][j] += partial_sum[std::size_t(w)][j];
      partial_count[0][j] += partial_count[std::size_t(w)][j];
    }

  Volume out(volume.size[0], volume.size[1], volume.size[2], VolumeKind::image);
  out.spacing = volume.spacing;
  out.origin = volume.origin;
  for (std::int64_t z = 0; z < out.size[2]; ++z)
    for (std::int64_t y = 0; y < out.size[1]; ++y)
      for (std::int64_t x = 0; x < out.size[0]; ++x) {
        const std::size_t at = std::size_t(z * pad[1] * pad[0] + y * pad[0] + x);
        if (partial_count[0][at] == 0)
          throw ContractViolation("sliding_window_predict: uncovered voxel, plan is broken");
        out.at(x, y, z) = float(partial_sum[0][at] / double(partial_count[0][at]));
      }
  return out;
}

Volume sliding_window_predict(const WindowForward& forward, const Volume& volume,
                              const InferenceConfig& config) {
  return stitch_windows(forward, volume, plan_windows(volume.size, config), config.workers);
}

Volume sliding_window_predict(const ModelGraph<float>& model, const Volume& volume,
                              const InferenceConfig& config) {
  if (model.config().mode != ModelMode::full)
    throw ContractViolation("sliding_window_predict: model must be in full mode");
  return sliding_window_predict(
      [&model](const Tensor<float>& patch) { return model.forward(patch).prob->value; }, volume, config);
}

Volume binarize(const Volume& prob, float threshold, bool largest_component) {
  prob.validate();
  Volume mask(prob.size[0], prob.size[1], prob.size[2], VolumeKind::label);
  mask.spacing = prob.spacing;
  mask.origin = prob.origin;
  for (std::size_t i = 0; i < prob.data.size(); ++i) mask.data[i] = prob.data[i] >= threshold ? 1.0f : 0.0f;
  if (!largest_component) return mask;

  // Flood-fill 6-connected components, keep the most voxels. Ties keep the
  // component discovered first (lowest linear index), a deterministic rule.
  std::vector<std::int32_t> component(mask.data.size(), -1);
  std::vector<std::int64_t> component_size;
  const std::int64_t nx = mask.size[0], ny = mask.size[1];
  for (std::size_t seed = 0; seed < mask.data.size(); ++seed) {
    if (mask.data[seed] == 0.0f || component[seed] >= 0) continue;
    const auto id = std::int32_t(component_size.size());
    std::int64_t voxels = 0;
    std::queue<std::int64_t> frontier;
    frontier.push(std::int64_t(seed));
    component[seed] = id;
    while (!frontier.empty()) {
      const std::int64_t at = frontier.front();
      frontier.pop();
      ++voxels;
      const std::int64_t x = at % nx, y = (at / nx) % ny, z = at / (nx * ny);
      const std::int64_t deltas[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& d : deltas) {
        const std::int64_t qx = x + d[0], qy = y + d[1], qz = z + d[2];
        if (!mask.in_bounds(qx, qy, qz)) continue;
        const std::int64_t q = (qz * ny + qy) * nx + qx;
        if (mask.data[std::size_t(q)] == 0.0f || component[std::size_t(q)] >= 0) continue;
        component[std::size_t(q)] = id;
        frontier.push(q);
      }
    }
    component_size.push_back(voxels);
  }
  if (component_size.empty()) return mask;
  const auto largest =
      std::int32_t(std::max_element(component_size.begin(), component_size.end()) - component_size.begin());
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (component[i] != largest) mask.data[i] = 0.0f;
  return mask;
}

}  // namespace edgeseg
