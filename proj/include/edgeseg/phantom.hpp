#pragma once

#include <cstdint>

#include "edgeseg/volume.hpp"

namespace edgeseg {

// Synthetic ellipsoid with an analytically known mask; drives the property
// tests and the desk-scale training experiments without the real dataset.
struct PhantomSpec {
  std::array<std::int64_t, 3> shape{96, 96, 32};
  std::array<double, 3> center{47.5, 47.5, 15.5};
  std::array<double, 3> radii{28.0, 24.0, 9.0};
  float foreground_intensity = 1.0f;
  float background_intensity = 0.0f;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PhantomCase {
  Volume image;
  Volume label;
};

// Mask voxel = 1 iff sum_i ((p_i - c_i) / r_i)^2 <= 1 evaluated at voxel
// centers. Image = background + (foreground - background) * mask plus
// Gaussian noise keyed by (seed, voxel index). Spacing is the canonical
// (0.625, 0.625, 1.5) mm.
PhantomCase make_ellipsoid_phantom(const PhantomSpec& spec);

}  // namespace edgeseg
