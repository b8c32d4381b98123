#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "edgeseg/inference.hpp"
#include "edgeseg/phantom.hpp"
#include "test_support.hpp"

using namespace edgeseg;

namespace {

// Pure function of the patch contents, so evaluation order cannot matter.
Tensor<float> wavy_stub(const Tensor<float>& patch) {
  Tensor<float> out(patch.shape());
  for (std::int64_t i = 0; i < patch.numel(); ++i)
    out[i] = 1.0f / (1.0f + std::exp(-patch[i]));
  return out;
}

Volume coordinate_volume(std::int64_t nx, std::int64_t ny, std::int64_t nz) {
  Volume v(nx, ny, nz);
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) v.at(x, y, z) = float(x);
  return v;
}

double max_abs_diff(const Volume& a, const Volume& b) {
  REQUIRE(a.size == b.size);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
  return worst;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("an exact-fit volume plans a single window at the origin") {
  const WindowPlan plan = plan_windows({96, 96, 32});
  CHECK(plan.padded_shape == std::array<std::int64_t, 3>{96, 96, 32});
  REQUIRE(plan.origins.size() == 1);
  CHECK(plan.origins[0] == std::array<std::int64_t, 3>{0, 0, 0});
}

TEST_CASE("a 120x120x40 volume plans the eight regular windows") {
  const WindowPlan plan = plan_windows({120, 120, 40});
  REQUIRE(plan.origins.size() == 8);
  for (std::int64_t oz : {0, 8})
    for (std::int64_t oy : {0, 24})
      for (std::int64_t ox : {0, 24}) {
        const std::array<std::int64_t, 3> want{ox, oy, oz};
        CHECK(std::count(plan.origins.begin(), plan.origins.end(), want) == 1);
      }
}

TEST_CASE("a final window is clamped when the stride overshoots the axis end") {
  const WindowPlan plan = plan_windows({100, 96, 32});
  REQUIRE(plan.origins.size() == 2);
  CHECK(plan.origins[0] == std::array<std::int64_t, 3>{0, 0, 0});
  CHECK(plan.origins[1] == std::array<std::int64_t, 3>{4, 0, 0});
}

TEST_CASE("axes shorter than the window are padded up before planning") {
  const WindowPlan plan = plan_windows({50, 40, 10});
  CHECK(plan.padded_shape == std::array<std::int64_t, 3>{96, 96, 32});
  REQUIRE(plan.origins.size() == 1);
  CHECK(plan.origins[0] == std::array<std::int64_t, 3>{0, 0, 0});
}

TEST_CASE("planned coverage matches the per-axis brute-force count and misses nothing") {
  InferenceConfig cfg;
  cfg.window = {32, 32, 8};
  cfg.stride = {16, 16, 4};
  const std::array<std::int64_t, 3> shape{48, 50, 17};
  const WindowPlan plan = plan_windows(shape, cfg);

  // Count per voxel straight from the origin list.
  std::vector<int> count(std::size_t(plan.padded_shape[0] * plan.padded_shape[1] * plan.padded_shape[2]), 0);
  for (const auto& o : plan.origins)
    for (std::int64_t z = o[2]; z < o[2] + cfg.window[2]; ++z)
      for (std::int64_t y = o[1]; y < o[1] + cfg.window[1]; ++y)
        for (std::int64_t x = o[0]; x < o[0] + cfg.window[0]; ++x)
          ++count[std::size_t((z * plan.padded_shape[1] + y) * plan.padded_shape[0] + x)];

  // Independent per-axis covering counts multiply because the plan is a
  // Cartesian product of the axis origin lists.
  auto axis_cover = [&](int axis, std::int64_t v) {
    std::vector<std::int64_t> origins;
    for (const auto& o : plan.origins) origins.push_back(o[std::size_t(axis)]);
    std::sort(origins.begin(), origins.end());
    origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
    int covering = 0;
    for (std::int64_t o : origins) covering += o <= v && v < o + cfg.window[std::size_t(axis)];
    return covering;
  };
  bool all_match = true;
  bool all_covered = true;
  for (std::int64_t z = 0; z < plan.padded_shape[2]; ++z)
    for (std::int64_t y = 0; y < plan.padded_shape[1]; ++y)
      for (std::int64_t x = 0; x < plan.padded_shape[0]; ++x) {
        const int got = count[std::size_t((z * plan.padded_shape[1] + y) * plan.padded_shape[0] + x)];
        all_covered &= got >= 1;
        all_match &= got == axis_cover(0, x) * axis_cover(1, y) * axis_cover(2, z);
      }
  CHECK(all_covered);
  CHECK(all_match);
}

TEST_CASE("a constant stub stitches to exactly that constant") {
  Volume v(120, 120, 40);
  for (auto& x : v.data) x = -1.0f;
  const Volume out = sliding_window_predict(
      [](const Tensor<float>& p) { return Tensor<float>(p.shape(), 0.7f); }, v);
  CHECK(out.size == v.size);
  bool exact = true;
  for (float x : out.data) exact &= x == 0.7f;
  CHECK(exact);
}

TEST_CASE("two overlapping windows average by hand-checkable arithmetic") {
  const Volume v = coordinate_volume(100, 96, 32);
  const Volume out = sliding_window_predict(
      [](const Tensor<float>& p) {
        // Window A starts at x = 0, window B at x = 4; the first voxel of
        // the patch carries its global x coordinate.
        const float c = p.at(0, 0, 0, 0, 0) == 0.0f ? 0.4f : 0.8f;
        return Tensor<float>(p.shape(), c);
      },
      v);
  // Hand arithmetic lands in the same float32 output space.
  const float both = float((double(0.4f) + double(0.8f)) / 2.0);
  bool ok = true;
  for (std::int64_t z = 0; z < 32 && ok; ++z)
    for (std::int64_t y = 0; y < 96 && ok; ++y)
      for (std::int64_t x = 0; x < 100 && ok; ++x) {
        const double got = out.at(x, y, z);
        const double want = x < 4 ? 0.4f : (x < 96 ? both : 0.8f);
        ok = std::abs(got - want) < 1e-9;
      }
  CHECK(ok);
}

TEST_CASE("stitching is invariant to window order and worker count") {
  PhantomSpec spec;
  spec.shape = {48, 48, 16};
  spec.center = {23.5, 23.5, 7.5};
  spec.radii = {14.0, 11.0, 5.0};
  spec.noise_sigma = 0.2;
  const Volume image = make_ellipsoid_phantom(spec).image;

  InferenceConfig cfg;
  cfg.window = {32, 32, 8};
  cfg.stride = {16, 16, 4};
  const WindowPlan plan = plan_windows(image.size, cfg);
  REQUIRE(plan.origins.size() == 12);

  const Volume base = stitch_windows(wavy_stub, image, plan, 1);
  for (float x : base.data) {
    REQUIRE(x >= 0.0f);
    REQUIRE(x <= 1.0f);
  }

  WindowPlan reversed = plan;
  std::reverse(reversed.origins.begin(), reversed.origins.end());
  WindowPlan shuffled = plan;
  std::mt19937 gen(7);
  std::shuffle(shuffled.origins.begin(), shuffled.origins.end(), gen);

  CHECK(max_abs_diff(base, stitch_windows(wavy_stub, image, reversed, 1)) < 1e-6);
  CHECK(max_abs_diff(base, stitch_windows(wavy_stub, image, shuffled, 1)) < 1e-6);
  CHECK(max_abs_diff(base, stitch_windows(wavy_stub, image, plan, 3)) < 1e-6);
  CHECK(max_abs_diff(base, stitch_windows(wavy_stub, image, shuffled, 5)) < 1e-6);
}

TEST_CASE("a single-window prediction equals one direct forward pass") {
  PhantomSpec spec;
  spec.shape = {48, 48, 16};
  spec.center = {23.5, 23.5, 7.5};
  spec.radii = {14.0, 11.0, 5.0};
  spec.noise_sigma = 0.05;
  const Volume image = make_ellipsoid_phantom(spec).image;

  NetworkConfig nc;
  nc.mode = ModelMode::full;
  nc.width_multiplier = 0.0625;
  ModelGraph<float> model(nc);

  InferenceConfig cfg;
  cfg.window = {48, 48, 16};
  const Volume stitched = sliding_window_predict(model, image, cfg);
  const Tensor<float> direct = model.forward(image.to_tensor()).prob->value;
  bool equal = stitched.size == image.size;
  for (std::int64_t z = 0; z < 16 && equal; ++z)
    for (std::int64_t y = 0; y < 48 && equal; ++y)
      for (std::int64_t x = 0; x < 48 && equal; ++x) equal = stitched.at(x, y, z) == direct.at(0, 0, x, y, z);
  CHECK(equal);
}

TEST_CASE("the model entry point refuses a pretrain-mode graph") {
  NetworkConfig nc;
  nc.mode = ModelMode::pretrain;
  nc.width_multiplier = 0.0625;
  ModelGraph<float> model(nc);
  const Volume v(48, 48, 16);
  CHECK_THROWS_AS(sliding_window_predict(model, v), ContractViolation);
}

TEST_CASE("bad plans and configs are rejected") {
  InferenceConfig cfg;
  cfg.stride = {0, 24, 8};
  CHECK_THROWS_AS(plan_windows({96, 96, 32}, cfg), ConfigError);
  CHECK_THROWS_AS(plan_windows({0, 96, 32}), ContractViolation);

  WindowPlan plan = plan_windows({96, 96, 32});
  plan.origins[0] = {1, 0, 0};  // 1 + 96 > 96
  const Volume v(96, 96, 32);
  CHECK_THROWS_AS(
      stitch_windows([](const Tensor<float>& p) { return Tensor<float>(p.shape(), 0.5f); }, v, plan, 1),
      ContractViolation);
}

TEST_CASE("thresholding is a boundary-inclusive comparison") {
  Volume prob(2, 1, 1);
  prob.data = {0.49f, 0.51f};
  const Volume mask = binarize(prob);
  CHECK(mask.kind == VolumeKind::label);
  CHECK(mask.data[0] == 0.0f);
  CHECK(mask.data[1] == 1.0f);

  Volume ones(3, 3, 3);
  for (auto& x : ones.data) x = 1.0f;
  const Volume all = binarize(ones);
  CHECK(testsupport::count_foreground(all) == 27);

  Volume half(1, 1, 1);
  half.data = {0.5f};
  CHECK(binarize(half).data[0] == 1.0f);
}

TEST_CASE("the largest-component filter keeps the ten-voxel blob and drops the three") {
  Volume prob(12, 5, 3);
  // ten voxels in one 6-connected run along x, three in a detached corner
  for (std::int64_t x = 0; x < 10; ++x) prob.at(x, 1, 1) = 1.0f;
  prob.at(11, 4, 2) = 1.0f;
  prob.at(11, 3, 2) = 1.0f;
  prob.at(10, 4, 2) = 1.0f;

  const Volume both = binarize(prob, 0.5f, false);
  CHECK(testsupport::count_foreground(both) == 13);

  const Volume filtered = binarize(prob, 0.5f, true);
  CHECK(testsupport::count_foreground(filtered) == 10);
  bool only_run = true;
  for (std::int64_t x = 0; x < 10; ++x) only_run &= filtered.at(x, 1, 1) == 1.0f;
  CHECK(only_run);

  const Volume empty = binarize(Volume(4, 4, 4), 0.5f, true);
  CHECK(testsupport::count_foreground(empty) == 0);
}

}  // TEST_SUITE
