#include "edgeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "edgeseg/edge.hpp"
#include "edgeseg/errors.hpp"

namespace edgeseg {
namespace {

constexpr double kFar = 1e30;  // stands in for "no seed reachable yet"

std::int64_t foreground_count(const Volume& v) {
  std::int64_t n = 0;
  for (float x : v.data) n += x != 0.0f;
  return n;
}

// Lower envelope of the parabolas (pos[i], f[i]); out[j] becomes
// min_i ((pos[j] - pos[i])^2 + f[i]). Positions are the physical axis
// coordinates, so anisotropic spacing needs no special casing.
void edt_pass(const std::vector<double>& f, const std::vector<double>& pos, std::vector<double>& out,
              std::vector<int>& hull, std::vector<double>& boundary) {
  const int n = int(f.size());
  hull.resize(std::size_t(n));
  boundary.resize(std::size_t(n) + 1);
  int k = 0;
  hull[0] = 0;
  boundary[0] = -std::numeric_limits<double>::infinity();
  boundary[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = hull[std::size_t(k)];
      s = ((f[std::size_t(q)] + pos[std::size_t(q)] * pos[std::size_t(q)]) -
           (f[std::size_t(p)] + pos[std::size_t(p)] * pos[std::size_t(p)])) /
          (2.0 * (pos[std::size_t(q)] - pos[std::size_t(p)]));
      if (s <= boundary[std::size_t(k)] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    hull[std::size_t(k)] = q;
    boundary[std::size_t(k)] = s;
    boundary[std::size_t(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (boundary[std::size_t(k) + 1] < pos[std::size_t(q)]) ++k;
    const int p = hull[std::size_t(k)];
    const double d = pos[std::size_t(q)] - pos[std::size_t(p)];
    out[std::size_t(q)] = d * d + f[std::size_t(p)];
  }
}

// Exact squared Euclidean distance transform to the seed set, separable
// one axis at a time (Felzenszwalb and Huttenlocher, generalized to
// physical coordinates).
std::vector<double> squared_distance_field(const Volume& seeds, const std::array<double, 3>& spacing) {
  const std::int64_t nx = seeds.size[0], ny = seeds.size[1], nz = seeds.size[2];
  std::vector<double> field(std::size_t(nx * ny * nz));
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = seeds.data[i] != 0.0f ? 0.0 : kFar;

  const auto n_max = static_cast<std::size_t>(std::max({nx, ny, nz}));
  std::vector<double> line(n_max), out(n_max), pos(n_max);
  std::vector<int> hull;
  std::vector<double> boundary;

  auto sweep = [&](std::int64_t n, double step, auto&& index) {
    for (std::int64_t i = 0; i < n; ++i) pos[std::size_t(i)] = double(i) * step;
    line.resize(std::size_t(n));
    out.resize(std::size_t(n));
    index(n);
  };

  sweep(nx, spacing[0], [&](std::int64_t n) {
    for (std::int64_t z = 0; z < nz; ++z)
      for (std::int64_t y = 0; y < ny; ++y) {
        const std::size_t base = std::size_t((z * ny + y) * nx);
        for (std::int64_t x = 0; x < n; ++x) line[std::size_t(x)] = field[base + std::size_t(x)];
        edt_pass(line, pos, out, hull, boundary);
        for (std::int64_t x = 0; x < n; ++x) field[base + std::size_t(x)] = out[std::size_t(x)];
      }
  });
  sweep(ny, spacing[1], [&](std::int64_t n) {
    for (std::int64_t z = 0; z < nz; ++z)
      for (std::int64_t x = 0; x < nx; ++x) {
        const std::size_t base = std::size_t(z * ny * nx + x);
        for (std::int64_t y = 0; y < n; ++y) line[std::size_t(y)] = field[base + std::size_t(y * nx)];
        edt_pass(line, pos, out, hull, boundary);
        for (std::int64_t y = 0; y < n; ++y) field[base + std::size_t(y * nx)] = out[std::size_t(y)];
      }
  });
  sweep(nz, spacing[2], [&](std::int64_t n) {
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) {
        const std::size_t base = std::size_t(y * nx + x);
        const std::size_t stride = std::size_t(ny * nx);
        for (std::int64_t z = 0; z < n; ++z) line[std::size_t(z)] = field[base + std::size_t(z) * stride];
        edt_pass(line, pos, out, hull, boundary);
        for (std::int64_t z = 0; z < n; ++z) field[base + std::size_t(z) * stride] = out[std::size_t(z)];
      }
  });
  return field;
}

void collect_directed(const Volume& from_surface, const std::vector<double>& to_field,
                      std::vector<double>& pooled) {
  for (std::size_t i = 0; i < from_surface.data.size(); ++i)
    if (from_surface.data[i] != 0.0f) pooled.push_back(std::sqrt(to_field[i]));
}

// Linear interpolation on the sorted sample: rank = p (n - 1).
double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ContractViolation("percentile: empty sample");
  const double rank = p * double(sorted.size() - 1);
  const auto lo = std::size_t(rank);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = rank - double(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double dice_score(const Volume& a, const Volume& b) {
  if (a.size != b.size) throw ContractViolation("dice_score: shape mismatch");
  a.validate();
  b.validate();
  std::int64_t inter = 0, total = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool fa = a.data[i] != 0.0f, fb = b.data[i] != 0.0f;
    inter += fa && fb;
    total += int(fa) + int(fb);
  }
  if (total == 0) return 1.0;
  return 2.0 * double(inter) / double(total);
}

SurfaceDistances surface_distances(const Volume& a, const Volume& b,
                                   const std::array<double, 3>& spacing) {
  if (a.size != b.size) throw ContractViolation("surface_distances: shape mismatch");
  for (double s : spacing)
    if (!(s > 0.0)) throw ContractViolation("surface_distances: spacing must be positive");

  SurfaceDistances result;
  if (foreground_count(a) == 0 || foreground_count(b) == 0) return result;  // not applicable

  const Volume surface_a = extract_edge_map(a);
  const Volume surface_b = extract_edge_map(b);
  const std::vector<double> field_to_b = squared_distance_field(surface_b, spacing);
  const std::vector<double> field_to_a = squared_distance_field(surface_a, spacing);

  std::vector<double> pooled;
  collect_directed(surface_a, field_to_b, pooled);
  collect_directed(surface_b, field_to_a, pooled);
  std::sort(pooled.begin(), pooled.end());

  double sum = 0.0;
  for (double d : pooled) sum += d;
  result.msd = sum / double(pooled.size());
  result.hd95 = percentile(pooled, 0.95);
  result.applicable = true;
  return result;
}

MetricsReport evaluate_case(const Volume& pred, const Volume& gt, const std::string& case_id) {
  if (pred.size != gt.size) throw ContractViolation("evaluate_case: shape mismatch");
  if (pred.spacing != gt.spacing) throw ContractViolation("evaluate_case: spacing mismatch");

  MetricsReport report;
  report.case_id = case_id;
  report.dice = dice_score(pred, gt);

  const SurfaceDistances sd = surface_distances(pred, gt, gt.spacing);
  report.distances_applicable = sd.applicable;
  report.hd95 = sd.hd95;
  report.mean_surface_distance = sd.msd;

  const std::int64_t vp = foreground_count(pred);
  const std::int64_t vg = foreground_count(gt);
  if (vg > 0) {
    report.volume_difference_applicable = true;
    report.relative_volume_difference = 100.0 * double(vp - vg) / double(vg);
  }
  return report;
}

}  // namespace edgeseg
