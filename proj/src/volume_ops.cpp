#include "edgeseg/volume_ops.hpp"

#include <algorithm>
#include <cmath>

namespace edgeseg {
namespace {

std::int64_t clamp_idx(std::int64_t v, std::int64_t n) { return std::clamp<std::int64_t>(v, 0, n - 1); }

}  // namespace

float sample_trilinear(const Volume& v, double x, double y, double z) {
  const auto x0 = static_cast<std::int64_t>(std::floor(x));
  const auto y0 = static_cast<std::int64_t>(std::floor(y));
  const auto z0 = static_cast<std::int64_t>(std::floor(z));
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double fz = z - static_cast<double>(z0);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? fz : 1.0 - fz;
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? fy : 1.0 - fy;
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? fx : 1.0 - fx;
        if (wx == 0.0) continue;
        acc += wx * wy * wz *
               static_cast<double>(v.at(clamp_idx(x0 + dx, v.size[0]), clamp_idx(y0 + dy, v.size[1]),
                                        clamp_idx(z0 + dz, v.size[2])));
      }
    }
  }
  return static_cast<float>(acc);
}

float sample_nearest(const Volume& v, double x, double y, double z) {
  return v.at(clamp_idx(std::llround(x), v.size[0]), clamp_idx(std::llround(y), v.size[1]),
              clamp_idx(std::llround(z), v.size[2]));
}

Volume crop_volume(const Volume& volume, const std::array<std::int64_t, 3>& origin,
                   const std::array<std::int64_t, 3>& size) {
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || size[a] < 1 || origin[a] + size[a] > volume.size[a]) {
      throw ContractViolation("crop_volume: box exceeds volume bounds on axis " + std::to_string(a));
    }
  }
  Volume out(size[0], size[1], size[2], volume.kind);
  out.spacing = volume.spacing;
  for (int a = 0; a < 3; ++a) out.origin[a] = volume.origin[a] + static_cast<double>(origin[a]) * volume.spacing[a];
  for (std::int64_t z = 0; z < size[2]; ++z) {
    for (std::int64_t y = 0; y < size[1]; ++y) {
      const float* src = &volume.data[static_cast<std::size_t>(volume.index(origin[0], origin[1] + y, origin[2] + z))];
      float* dst = &out.data[static_cast<std::size_t>(out.index(0, y, z))];
      std::copy(src, src + size[0], dst);
    }
  }
  return out;
}

Volume resample(const Volume& volume, const std::array<double, 3>& target_spacing) {
  volume.validate();
  for (double s : target_spacing) {
    if (!(s > 0.0)) throw ContractViolation("resample: target spacing must be positive");
  }

  std::array<std::int64_t, 3> out_size{};
  std::array<double, 3> step{};  // output voxel step in input voxel units
  for (int a = 0; a < 3; ++a) {
    const double exact = static_cast<double>(volume.size[a]) * volume.spacing[a] / target_spacing[a];
    out_size[a] = std::max<std::int64_t>(1, std::llround(exact));  // llround = half away from zero
    step[a] = target_spacing[a] / volume.spacing[a];
  }

  Volume out(out_size[0], out_size[1], out_size[2], volume.kind);
  out.spacing = target_spacing;
  out.origin = volume.origin;

  const bool nearest = volume.kind == VolumeKind::label;
  std::int64_t idx = 0;
  for (std::int64_t z = 0; z < out_size[2]; ++z) {
    const double sz = static_cast<double>(z) * step[2];
    for (std::int64_t y = 0; y < out_size[1]; ++y) {
      const double sy = static_cast<double>(y) * step[1];
      for (std::int64_t x = 0; x < out_size[0]; ++x, ++idx) {
        const double sx = static_cast<double>(x) * step[0];
        out.data[static_cast<std::size_t>(idx)] =
            nearest ? sample_nearest(volume, sx, sy, sz) : sample_trilinear(volume, sx, sy, sz);
      }
    }
  }
  return out;
}

Volume normalize_intensity(const Volume& volume) {
  volume.validate();
  if (volume.kind != VolumeKind::image) {
    throw ContractViolation("normalize_intensity: input must be an image volume");
  }

  double mean = 0.0;
  for (float v : volume.data) mean += static_cast<double>(v);
  mean /= static_cast<double>(volume.voxels());

  double var = 0.0;
  for (float v : volume.data) {
    const double d = static_cast<double>(v) - mean;
    var += d * d;
  }
  var /= static_cast<double>(volume.voxels());

  const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-8));
  Volume out = volume;
  for (float& v : out.data) v = static_cast<float>((static_cast<double>(v) - mean) * inv_std);
  return out;
}

}  // namespace edgeseg
