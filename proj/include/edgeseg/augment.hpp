#pragma once

#include <array>
#include <cstdint>

#include "edgeseg/volume.hpp"

namespace edgeseg {

inline constexpr std::array<std::int64_t, 3> kPatchSize{96, 96, 32};

// Dense per-voxel displacement (voxel units) interpolated from a 2x2x2
// control lattice. With two control points per axis the interpolation is
// trilinear (order-1 B-spline); the control lattice spans the volume.
struct DeformationField {
  std::array<std::int64_t, 3> shape{0, 0, 0};
  std::array<std::array<double, 3>, 8> control_points{};  // index = cx + 2*cy + 4*cz
  double max_displacement = 0.0;
  std::uint64_t seed = 0;

  // Interpolated displacement at voxel p.
  std::array<double, 3> displacement(std::int64_t x, std::int64_t y, std::int64_t z) const;
};

struct Patch {
  Volume image;
  Volume label;
  std::array<std::int64_t, 3> source_origin{0, 0, 0};
};

// Draws the 8 control vectors uniformly in [-max_displacement,
// +max_displacement]^3, keyed by (seed, control index, component).
DeformationField sample_bspline_field(const std::array<std::int64_t, 3>& shape, double max_displacement,
                                      std::uint64_t seed);

// Test hook: field with every control point set to the same vector.
DeformationField constant_field(const std::array<std::int64_t, 3>& shape, const std::array<double, 3>& v);

// output(p) = input(p + displacement(p)); trilinear sampling for images,
// nearest neighbor for labels; out-of-bounds samples clamp to the border.
Volume warp(const Volume& volume, const DeformationField& field);

// Pads symmetrically up to at least min_shape (images with the volume
// minimum, labels with 0). Returns the input untouched when already large
// enough. `offset`, when given, receives the leading pad per axis.
Volume pad_to_min_shape(const Volume& volume, const std::array<std::int64_t, 3>& min_shape,
                        std::array<std::int64_t, 3>* offset = nullptr);

// Uniformly random patch origin such that the crop fits; with probability
// foreground_bias the origin is drawn so the crop window intersects the
// label's foreground bounding box. Small volumes are padded first.
Patch random_crop(const Volume& image, const Volume& label, const std::array<std::int64_t, 3>& patch_size,
                  std::uint64_t seed, double foreground_bias = 0.5);

Patch random_crop(const Volume& image, const Volume& label, std::uint64_t seed, double foreground_bias = 0.5);

}  // namespace edgeseg
