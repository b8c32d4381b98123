#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream tag, counters...), so results never depend on evaluation
// order or worker count. Streams are separated by the tags below.

namespace edgeseg::rng {

// Stream tags. Keep values stable: they are baked into reproducible runs.
inline constexpr std::uint64_t kPhantomNoise = 1;
inline constexpr std::uint64_t kControlPoint = 2;
inline constexpr std::uint64_t kCrop = 3;
inline constexpr std::uint64_t kVolumePick = 4;
inline constexpr std::uint64_t kDeformSeed = 5;
inline constexpr std::uint64_t kParamInit = 6;
inline constexpr std::uint64_t kCropSeed = 7;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
}

template <typename... Ids>
inline std::uint64_t key(std::uint64_t seed, Ids... ids) {
  std::uint64_t h = splitmix64(seed);
  ((h = combine(h, static_cast<std::uint64_t>(ids))), ...);
  return h;
}

// Uniform in the open interval (0, 1); never returns 0 or 1, so logs are safe.
inline double to_u01(std::uint64_t k) {
  return (static_cast<double>(k >> 11) + 0.5) * 0x1.0p-53;
}

template <typename... Ids>
inline double uniform(std::uint64_t seed, Ids... ids) {
  return to_u01(key(seed, ids...));
}

template <typename... Ids>
inline double uniform_range(double lo, double hi, std::uint64_t seed, Ids... ids) {
  return lo + (hi - lo) * uniform(seed, ids...);
}

// Draws an index in [0, n).
template <typename... Ids>
inline std::uint64_t pick(std::uint64_t n, std::uint64_t seed, Ids... ids) {
  const auto v = static_cast<std::uint64_t>(uniform(seed, ids...) * static_cast<double>(n));
  return v >= n ? n - 1 : v;
}

// Standard normal via Box-Muller on two derived counters.
template <typename... Ids>
inline double gaussian(std::uint64_t seed, Ids... ids) {
  const double u1 = to_u01(combine(key(seed, ids...), 0));
  const double u2 = to_u01(combine(key(seed, ids...), 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace edgeseg::rng
