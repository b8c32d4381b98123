#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "edgeseg/errors.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

enum class VolumeKind { image, label };

// A rank-3 scalar field with physical metadata. Data is stored x-fastest
// (the MetaImage raw order). Label volumes hold only {0, 1}.
struct Volume {
  std::array<std::int64_t, 3> size{1, 1, 1};   // nx, ny, nz (z = slice axis)
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel
  std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm
  VolumeKind kind = VolumeKind::image;
  std::vector<float> data;

  Volume() = default;
  Volume(std::int64_t nx, std::int64_t ny, std::int64_t nz, VolumeKind k = VolumeKind::image, float fill = 0.0f)
      : size{nx, ny, nz}, kind(k), data(static_cast<std::size_t>(nx * ny * nz), fill) {}

  std::int64_t voxels() const { return size[0] * size[1] * size[2]; }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }

  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x + size[0] * (y + size[1] * z);
  }
  float& at(std::int64_t x, std::int64_t y, std::int64_t z) { return data[static_cast<std::size_t>(index(x, y, z))]; }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data[static_cast<std::size_t>(index(x, y, z))];
  }

  bool in_bounds(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < size[0] && y < size[1] && z < size[2];
  }

  // Enforces the type invariants; throws ContractViolation on failure.
  void validate() const;

  // Copies the voxel block into a (1,1,nx,ny,nz) tensor and back.
  Tensor<float> to_tensor() const;
  static Volume from_tensor(const Tensor<float>& t, const std::array<double, 3>& spacing,
                            const std::array<double, 3>& origin, VolumeKind kind);
};

inline bool is_binary_value(float v) { return v == 0.0f || v == 1.0f; }

}  // namespace edgeseg
