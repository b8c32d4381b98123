#include "edgeseg/augment.hpp"

#include <algorithm>
#include <limits>

#include "edgeseg/rng.hpp"
#include "edgeseg/volume_ops.hpp"

namespace edgeseg {

std::array<double, 3> DeformationField::displacement(std::int64_t x, std::int64_t y, std::int64_t z) const {
  const double wx = static_cast<double>(x) / static_cast<double>(shape[0] - 1);
  const double wy = static_cast<double>(y) / static_cast<double>(shape[1] - 1);
  const double wz = static_cast<double>(z) / static_cast<double>(shape[2] - 1);
  std::array<double, 3> d{0.0, 0.0, 0.0};
  for (int cz = 0; cz < 2; ++cz) {
    const double fz = cz ? wz : 1.0 - wz;
    for (int cy = 0; cy < 2; ++cy) {
      const double fy = cy ? wy : 1.0 - wy;
      for (int cx = 0; cx < 2; ++cx) {
        const double fx = cx ? wx : 1.0 - wx;
        const double w = fx * fy * fz;
        const auto& cp = control_points[static_cast<std::size_t>(cx + 2 * cy + 4 * cz)];
        for (int comp = 0; comp < 3; ++comp) d[static_cast<std::size_t>(comp)] += w * cp[static_cast<std::size_t>(comp)];
      }
    }
  }
  return d;
}

DeformationField sample_bspline_field(const std::array<std::int64_t, 3>& shape, double max_displacement,
                                      std::uint64_t seed) {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 2) throw ContractViolation("sample_bspline_field: shape must be >= 2 per axis");
  }
  DeformationField field;
  field.shape = shape;
  field.max_displacement = max_displacement;
  field.seed = seed;
  for (int cp = 0; cp < 8; ++cp) {
    for (int comp = 0; comp < 3; ++comp) {
      field.control_points[static_cast<std::size_t>(cp)][static_cast<std::size_t>(comp)] =
          rng::uniform_range(-max_displacement, max_displacement, seed, rng::kControlPoint, cp, comp);
    }
  }
  return field;
}

DeformationField constant_field(const std::array<std::int64_t, 3>& shape, const std::array<double, 3>& v) {
  DeformationField field;
  field.shape = shape;
  field.max_displacement = std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
  for (auto& cp : field.control_points) cp = v;
  return field;
}

Volume warp(const Volume& volume, const DeformationField& field) {
  if (volume.size != field.shape) {
    throw ContractViolation("warp: volume shape does not match deformation field shape");
  }
  Volume out(volume.size[0], volume.size[1], volume.size[2], volume.kind);
  out.spacing = volume.spacing;
  out.origin = volume.origin;

  const bool nearest = volume.kind == VolumeKind::label;
  std::int64_t idx = 0;
  for (std::int64_t z = 0; z < volume.size[2]; ++z) {
    for (std::int64_t y = 0; y < volume.size[1]; ++y) {
      for (std::int64_t x = 0; x < volume.size[0]; ++x, ++idx) {
        const auto d = field.displacement(x, y, z);
        const double sx = static_cast<double>(x) + d[0];
        const double sy = static_cast<double>(y) + d[1];
        const double sz = static_cast<double>(z) + d[2];
        out.data[static_cast<std::size_t>(idx)] =
            nearest ? sample_nearest(volume, sx, sy, sz) : sample_trilinear(volume, sx, sy, sz);
      }
    }
  }
  return out;
}

Volume pad_to_min_shape(const Volume& volume, const std::array<std::int64_t, 3>& min_shape,
                        std::array<std::int64_t, 3>* offset) {
  std::array<std::int64_t, 3> lead{0, 0, 0};
  bool needs_pad = false;
  std::array<std::int64_t, 3> out_size = volume.size;
  for (int a = 0; a < 3; ++a) {
    if (volume.size[a] < min_shape[a]) {
      needs_pad = true;
      out_size[a] = min_shape[a];
      lead[a] = (min_shape[a] - volume.size[a]) / 2;
    }
  }
  if (offset) *offset = lead;
  if (!needs_pad) return volume;

  float pad_value = 0.0f;
  if (volume.kind == VolumeKind::image && !volume.data.empty()) {
    pad_value = *std::min_element(volume.data.begin(), volume.data.end());
  }

  Volume out(out_size[0], out_size[1], out_size[2], volume.kind, pad_value);
  out.spacing = volume.spacing;
  for (int a = 0; a < 3; ++a) out.origin[a] = volume.origin[a] - static_cast<double>(lead[a]) * volume.spacing[a];
  for (std::int64_t z = 0; z < volume.size[2]; ++z) {
    for (std::int64_t y = 0; y < volume.size[1]; ++y) {
      const float* src = &volume.data[static_cast<std::size_t>(volume.index(0, y, z))];
      float* dst = &out.data[static_cast<std::size_t>(out.index(lead[0], lead[1] + y, lead[2] + z))];
      std::copy(src, src + volume.size[0], dst);
    }
  }
  return out;
}

Patch random_crop(const Volume& image, const Volume& label, const std::array<std::int64_t, 3>& patch_size,
                  std::uint64_t seed, double foreground_bias) {
  if (image.size != label.size) throw ContractViolation("random_crop: image and label must share shape");

  std::array<std::int64_t, 3> pad_offset{0, 0, 0};
  const Volume padded_image = pad_to_min_shape(image, patch_size, &pad_offset);
  const Volume padded_label = pad_to_min_shape(label, patch_size);

  // Foreground bounding box of the padded label, when any.
  std::array<std::int64_t, 3> bb_lo{std::numeric_limits<std::int64_t>::max(),
                                    std::numeric_limits<std::int64_t>::max(),
                                    std::numeric_limits<std::int64_t>::max()};
  std::array<std::int64_t, 3> bb_hi{-1, -1, -1};
  for (std::int64_t z = 0; z < padded_label.size[2]; ++z) {
    for (std::int64_t y = 0; y < padded_label.size[1]; ++y) {
      for (std::int64_t x = 0; x < padded_label.size[0]; ++x) {
        if (padded_label.at(x, y, z) == 0.0f) continue;
        bb_lo = {std::min(bb_lo[0], x), std::min(bb_lo[1], y), std::min(bb_lo[2], z)};
        bb_hi = {std::max(bb_hi[0], x), std::max(bb_hi[1], y), std::max(bb_hi[2], z)};
      }
    }
  }
  const bool has_foreground = bb_hi[0] >= 0;
  const bool biased = has_foreground && rng::uniform(seed, rng::kCrop, 0) < foreground_bias;

  std::array<std::int64_t, 3> origin{};
  for (int a = 0; a < 3; ++a) {
    const std::int64_t max_origin = padded_image.size[a] - patch_size[a];
    std::int64_t lo = 0, hi = max_origin;
    if (biased) {
      // Any origin whose window [o, o + patch) touches [bb_lo, bb_hi].
      lo = std::max<std::int64_t>(0, bb_lo[a] - (patch_size[a] - 1));
      hi = std::min(max_origin, bb_hi[a]);
    }
    origin[a] = lo + static_cast<std::int64_t>(rng::pick(static_cast<std::uint64_t>(hi - lo + 1), seed, rng::kCrop,
                                                         1 + a));
  }

  Patch patch;
  patch.image = crop_volume(padded_image, origin, patch_size);
  patch.label = crop_volume(padded_label, origin, patch_size);
  for (int a = 0; a < 3; ++a) patch.source_origin[a] = origin[a] - pad_offset[a];
  return patch;
}

Patch random_crop(const Volume& image, const Volume& label, std::uint64_t seed, double foreground_bias) {
  return random_crop(image, label, kPatchSize, seed, foreground_bias);
}

}  // namespace edgeseg
