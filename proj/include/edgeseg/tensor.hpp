#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "edgeseg/errors.hpp"

namespace edgeseg {

// All feature tensors are rank-5 [batch, channel, x, y, z] with x the
// fastest-moving axis in memory (matches the MetaImage raw order, so a
// single-channel tensor's voxel block is byte-compatible with a Volume).
struct TensorShape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t x = 1;
  std::int64_t y = 1;
  std::int64_t z = 1;

  std::int64_t voxels() const { return x * y * z; }
  std::int64_t numel() const { return n * c * voxels(); }
  bool operator==(const TensorShape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << x << "," << y << "," << z << ")";
    return os.str();
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorShape s, T fill = T{0}) : shape_(s), data_(static_cast<std::size_t>(s.numel()), fill) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const TensorShape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) const {
    const std::int64_t v = x + shape_.x * (y + shape_.y * z);
    return v + shape_.voxels() * (c + shape_.c * n);
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) {
    return data_[static_cast<std::size_t>(index(n, c, x, y, z))];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[static_cast<std::size_t>(index(n, c, x, y, z))];
  }

  // Pointer to the start of channel c of sample n (a contiguous voxel block).
  T* channel(std::int64_t n, std::int64_t c) { return data() + index(n, c, 0, 0, 0); }
  const T* channel(std::int64_t n, std::int64_t c) const { return data() + index(n, c, 0, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  TensorShape shape_;
  std::vector<T> data_;
};

inline void require_same_shape(const TensorShape& a, const TensorShape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace edgeseg
