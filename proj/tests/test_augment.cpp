#include "doctest.h"

#include <set>

#include "edgeseg/augment.hpp"
#include "edgeseg/errors.hpp"
#include "edgeseg/phantom.hpp"
#include "test_support.hpp"

using namespace edgeseg;

TEST_SUITE("augment") {

TEST_CASE("zero maximum displacement yields an identically zero field") {
  const DeformationField f = sample_bspline_field({16, 16, 8}, 0.0, 7u);
  for (const auto& cp : f.control_points)
    for (double c : cp) CHECK(c == 0.0);
  const auto d = f.displacement(3.0, 11.0, 5.0);
  CHECK(d == std::array<double, 3>{0.0, 0.0, 0.0});
}

TEST_CASE("control points are bounded by the maximum displacement") {
  const DeformationField f = sample_bspline_field({32, 32, 16}, 4.0, 123u);
  bool any_nonzero = false;
  for (const auto& cp : f.control_points)
    for (double c : cp) {
      CHECK(std::abs(c) <= 4.0);
      any_nonzero |= c != 0.0;
    }
  CHECK(any_nonzero);
}

TEST_CASE("interpolated displacements never exceed the control point bound") {
  const DeformationField f = sample_bspline_field({20, 18, 10}, 3.0, 5u);
  for (double x : {0.0, 4.7, 19.0})
    for (double y : {0.0, 8.1, 17.0})
      for (double z : {0.0, 4.4, 9.0}) {
        const auto d = f.displacement(x, y, z);
        for (double c : d) CHECK(std::abs(c) <= 3.0);
      }
}

TEST_CASE("corner displacements equal their control points") {
  const DeformationField f = sample_bspline_field({16, 12, 8}, 2.5, 9u);
  const auto corner = f.displacement(15.0, 11.0, 7.0);  // (1,1,1) corner
  const auto& cp = f.control_points[1 + 2 * 1 + 4 * 1];
  for (int i = 0; i < 3; ++i) CHECK(corner[i] == doctest::Approx(cp[i]));
}

TEST_CASE("the same seed reproduces the field exactly") {
  const DeformationField a = sample_bspline_field({16, 16, 8}, 4.0, 77u);
  const DeformationField b = sample_bspline_field({16, 16, 8}, 4.0, 77u);
  CHECK(a.control_points == b.control_points);
  const DeformationField c = sample_bspline_field({16, 16, 8}, 4.0, 78u);
  CHECK(a.control_points != c.control_points);
}

TEST_CASE("warping with a zero field is the identity") {
  PhantomSpec spec;
  spec.shape = {24, 24, 12};
  spec.center = {11.5, 11.5, 5.5};
  spec.radii = {7.0, 6.0, 4.0};
  spec.noise_sigma = 5.0;
  const PhantomCase c = make_ellipsoid_phantom(spec);
  const DeformationField f = constant_field({24, 24, 12}, {0.0, 0.0, 0.0});
  const Volume wi = warp(c.image, f);
  const Volume wl = warp(c.label, f);
  for (std::size_t i = 0; i < wi.data.size(); ++i) CHECK(wi.data[i] == doctest::Approx(c.image.data[i]));
  CHECK(wl.data == c.label.data);
}

TEST_CASE("a unit shift along x samples the next voxel") {
  Volume v(8, 6, 4, VolumeKind::image);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = float(i);
  const DeformationField f = constant_field({8, 6, 4}, {1.0, 0.0, 0.0});
  const Volume w = warp(v, f);
  for (std::int64_t z = 0; z < 4; ++z)
    for (std::int64_t y = 0; y < 6; ++y) {
      for (std::int64_t x = 0; x + 1 < 8; ++x) CHECK(w.at(x, y, z) == v.at(x + 1, y, z));
      CHECK(w.at(7, y, z) == v.at(7, y, z));  // clamped at the border
    }
}

TEST_CASE("a volume constant along x is unchanged by a shift along x") {
  Volume v(10, 6, 4, VolumeKind::image);
  for (std::int64_t z = 0; z < 4; ++z)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 10; ++x) v.at(x, y, z) = float(y * 10 + z);
  const DeformationField f = constant_field({10, 6, 4}, {1.0, 0.0, 0.0});
  const Volume w = warp(v, f);
  CHECK(w.data == v.data);
}

TEST_CASE("warped labels stay binary under fractional displacements") {
  PhantomSpec spec;
  spec.shape = {32, 32, 16};
  spec.center = {15.5, 15.5, 7.5};
  spec.radii = {9.0, 8.0, 5.0};
  const PhantomCase c = make_ellipsoid_phantom(spec);
  const DeformationField f = sample_bspline_field({32, 32, 16}, 3.5, 31u);
  const Volume w = warp(c.label, f);
  std::set<float> values(w.data.begin(), w.data.end());
  for (float v : values) CHECK((v == 0.0f || v == 1.0f));
  CHECK(testsupport::count_foreground(w) > 0);
}

TEST_CASE("moderate deformations change the foreground volume by less than 30 percent") {
  const PhantomCase c = make_ellipsoid_phantom(PhantomSpec{});
  const auto before = double(testsupport::count_foreground(c.label));
  for (std::uint32_t seed : {101u, 102u, 103u, 104u}) {
    CAPTURE(seed);
    const DeformationField f = sample_bspline_field(c.label.size, 4.0, seed);
    const Volume w = warp(c.label, f);
    const auto after = double(testsupport::count_foreground(w));
    CHECK(std::abs(after - before) / before < 0.30);
  }
}

TEST_CASE("field and volume shapes must agree") {
  Volume v(8, 8, 4, VolumeKind::image);
  const DeformationField f = constant_field({8, 8, 8}, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(warp(v, f), ContractViolation);
}

TEST_CASE("degenerate field shapes are rejected") {
  CHECK_THROWS_AS(sample_bspline_field({1, 8, 8}, 1.0, 0u), ContractViolation);
}

TEST_CASE("padding centres the volume and fills images with their minimum") {
  Volume v(4, 4, 2, VolumeKind::image);
  v.fill(10.0f);
  v.at(1, 1, 0) = -3.0f;
  std::array<std::int64_t, 3> offset{};
  const Volume p = pad_to_min_shape(v, {8, 6, 4}, &offset);
  CHECK(p.size == std::array<std::int64_t, 3>{8, 6, 4});
  CHECK(offset == std::array<std::int64_t, 3>{2, 1, 1});
  CHECK(p.at(0, 0, 0) == -3.0f);  // padding uses the volume minimum
  CHECK(p.at(2, 1, 1) == 10.0f);
  CHECK(p.at(3, 2, 1) == -3.0f);  // the moved interior voxel
  CHECK(p.origin[0] == doctest::Approx(v.origin[0] - 2 * v.spacing[0]));
}

TEST_CASE("padding labels uses background zeros") {
  Volume v(4, 4, 2, VolumeKind::label);
  v.fill(1.0f);
  const Volume p = pad_to_min_shape(v, {6, 6, 4}, nullptr);
  CHECK(p.at(0, 0, 0) == 0.0f);
  CHECK(p.at(2, 2, 1) == 1.0f);
  CHECK(testsupport::count_foreground(p) == testsupport::count_foreground(v));
}

TEST_CASE("padding never shrinks an axis that is already large enough") {
  Volume v(10, 4, 6, VolumeKind::image);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = float(i);
  const Volume p = pad_to_min_shape(v, {8, 8, 4}, nullptr);
  CHECK(p.size == std::array<std::int64_t, 3>{10, 8, 6});
}

TEST_CASE("cropping an exact-size volume returns it whole") {
  const PhantomCase c = make_ellipsoid_phantom(PhantomSpec{});
  const Patch p = random_crop(c.image, c.label, 5u);
  CHECK(p.image.size == kPatchSize);
  CHECK(p.source_origin == std::array<std::int64_t, 3>{0, 0, 0});
  CHECK(p.image.data == c.image.data);
  CHECK(p.label.data == c.label.data);
}

TEST_CASE("crop origins respect the volume bounds") {
  PhantomSpec spec;
  spec.shape = {128, 112, 48};
  spec.center = {63.5, 55.5, 23.5};
  spec.radii = {20.0, 18.0, 10.0};
  const PhantomCase c = make_ellipsoid_phantom(spec);
  for (std::uint32_t seed = 0; seed < 40; ++seed) {
    CAPTURE(seed);
    const Patch p = random_crop(c.image, c.label, seed);
    CHECK(p.image.size == kPatchSize);
    for (int a = 0; a < 3; ++a) {
      CHECK(p.source_origin[a] >= 0);
      CHECK(p.source_origin[a] + kPatchSize[a] <= spec.shape[a]);
    }
  }
}

TEST_CASE("the same seed reproduces the crop") {
  PhantomSpec spec;
  spec.shape = {128, 128, 40};
  spec.center = {63.5, 63.5, 19.5};
  spec.radii = {24.0, 22.0, 11.0};
  const PhantomCase c = make_ellipsoid_phantom(spec);
  const Patch a = random_crop(c.image, c.label, 17u);
  const Patch b = random_crop(c.image, c.label, 17u);
  CHECK(a.source_origin == b.source_origin);
  CHECK(a.image.data == b.image.data);
}

TEST_CASE("small volumes are padded up to the patch shape") {
  PhantomSpec spec;
  spec.shape = {60, 60, 20};
  spec.center = {29.5, 29.5, 9.5};
  spec.radii = {15.0, 14.0, 7.0};
  const PhantomCase c = make_ellipsoid_phantom(spec);
  const Patch p = random_crop(c.image, c.label, 3u);
  CHECK(p.image.size == kPatchSize);
  for (float v : p.label.data) CHECK((v == 0.0f || v == 1.0f));
  // The patch must carry the entire (padded) foreground.
  CHECK(testsupport::count_foreground(p.label) == testsupport::count_foreground(c.label));
  // Origins may be negative once padding enters the picture.
  for (int a = 0; a < 3; ++a) CHECK(p.source_origin[a] <= 0);
}

TEST_CASE("foreground-biased crops hit the object reliably") {
  PhantomSpec spec;
  spec.shape = {192, 192, 64};
  spec.center = {95.5, 95.5, 31.5};
  spec.radii = {20.0, 18.0, 9.0};
  const PhantomCase c = make_ellipsoid_phantom(spec);
  int with_fg = 0;
  for (std::uint32_t seed = 0; seed < 100; ++seed)
    if (testsupport::count_foreground(random_crop(c.image, c.label, seed, 1.0).label) > 0) ++with_fg;
  CHECK(with_fg == 100);
}

}  // TEST_SUITE
