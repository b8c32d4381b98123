#include "edgeseg/volume.hpp"

#include <cstring>

namespace edgeseg {

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1) throw ContractViolation("Volume: dimension " + std::to_string(a) + " must be >= 1");
    if (!(spacing[a] > 0.0)) throw ContractViolation("Volume: spacing component " + std::to_string(a) + " must be positive");
  }
  if (static_cast<std::int64_t>(data.size()) != voxels()) {
    throw ContractViolation("Volume: data size does not match dimensions");
  }
  if (kind == VolumeKind::label) {
    for (float v : data) {
      if (!is_binary_value(v)) throw ContractViolation("Volume: label values must be in {0, 1}");
    }
  }
}

Tensor<float> Volume::to_tensor() const {
  Tensor<float> t(TensorShape{1, 1, size[0], size[1], size[2]});
  std::memcpy(t.data(), data.data(), data.size() * sizeof(float));
  return t;
}

Volume Volume::from_tensor(const Tensor<float>& t, const std::array<double, 3>& spacing,
                           const std::array<double, 3>& origin, VolumeKind kind) {
  const auto& s = t.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("Volume::from_tensor: tensor must be (1,1,x,y,z), got " + s.str());
  Volume v(s.x, s.y, s.z, kind);
  v.spacing = spacing;
  v.origin = origin;
  std::memcpy(v.data.data(), t.data(), v.data.size() * sizeof(float));
  return v;
}

}  // namespace edgeseg
