#pragma once

#include "edgeseg/volume.hpp"

namespace edgeseg {

// Resamples to the target spacing. Output size per axis is
// round(in_size * in_spacing / target_spacing), at least 1, with half-values
// rounded away from zero. Images are interpolated trilinearly, labels by
// nearest neighbor. Origin is preserved.
Volume resample(const Volume& volume, const std::array<double, 3>& target_spacing);

// Per-volume z-score with a variance floor of 1e-8. Images only.
Volume normalize_intensity(const Volume& volume);

// Point samplers with border clamping; coordinates in voxel units.
float sample_trilinear(const Volume& v, double x, double y, double z);
float sample_nearest(const Volume& v, double x, double y, double z);

// Copies the axis-aligned box [origin, origin + size) out of the volume.
Volume crop_volume(const Volume& volume, const std::array<std::int64_t, 3>& origin,
                   const std::array<std::int64_t, 3>& size);

}  // namespace edgeseg
