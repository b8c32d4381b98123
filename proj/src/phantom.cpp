#include "edgeseg/phantom.hpp"

#include "edgeseg/rng.hpp"

namespace edgeseg {

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw ContractViolation("PhantomSpec: shape must be >= 1 per axis");
    if (!(radii[a] > 0.0)) throw ContractViolation("PhantomSpec: radii must be strictly positive");
    if (center[a] - radii[a] < 0.0 || center[a] + radii[a] > static_cast<double>(shape[a] - 1)) {
      throw ContractViolation("PhantomSpec: ellipsoid exceeds volume bounds on axis " + std::to_string(a));
    }
  }
  if (noise_sigma < 0.0) throw ContractViolation("PhantomSpec: noise_sigma must be >= 0");
}

PhantomCase make_ellipsoid_phantom(const PhantomSpec& spec) {
  spec.validate();
  const std::array<double, 3> canonical_spacing{0.625, 0.625, 1.5};

  Volume image(spec.shape[0], spec.shape[1], spec.shape[2], VolumeKind::image);
  Volume mask(spec.shape[0], spec.shape[1], spec.shape[2], VolumeKind::label);
  image.spacing = canonical_spacing;
  mask.spacing = canonical_spacing;

  std::int64_t idx = 0;
  for (std::int64_t z = 0; z < spec.shape[2]; ++z) {
    for (std::int64_t y = 0; y < spec.shape[1]; ++y) {
      for (std::int64_t x = 0; x < spec.shape[0]; ++x, ++idx) {
        const double dx = (static_cast<double>(x) - spec.center[0]) / spec.radii[0];
        const double dy = (static_cast<double>(y) - spec.center[1]) / spec.radii[1];
        const double dz = (static_cast<double>(z) - spec.center[2]) / spec.radii[2];
        const bool inside = dx * dx + dy * dy + dz * dz <= 1.0;
        mask.data[static_cast<std::size_t>(idx)] = inside ? 1.0f : 0.0f;
        double v = inside ? spec.foreground_intensity : spec.background_intensity;
        if (spec.noise_sigma > 0.0) {
          v += spec.noise_sigma * rng::gaussian(spec.seed, rng::kPhantomNoise, idx);
        }
        image.data[static_cast<std::size_t>(idx)] = static_cast<float>(v);
      }
    }
  }
  return {std::move(image), std::move(mask)};
}

}  // namespace edgeseg
