#include "doctest.h"

#include <set>

#include "edgeseg/errors.hpp"
#include "edgeseg/phantom.hpp"
#include "test_support.hpp"

using namespace edgeseg;

TEST_SUITE("phantom") {

TEST_CASE("unit-radius ellipsoid at an integer center covers exactly the 6-neighbourhood") {
  PhantomSpec spec;
  spec.shape = {9, 9, 9};
  spec.center = {4.0, 4.0, 4.0};
  spec.radii = {1.0, 1.0, 1.0};
  spec.noise_sigma = 0.0;
  const PhantomCase c = make_ellipsoid_phantom(spec);
  CHECK(testsupport::count_foreground(c.label) == 7);
  CHECK(c.label.at(4, 4, 4) == 1.0f);
  CHECK(c.label.at(5, 4, 4) == 1.0f);
  CHECK(c.label.at(3, 4, 4) == 1.0f);
  CHECK(c.label.at(5, 5, 4) == 0.0f);
}

TEST_CASE("zero noise makes the image exactly two-valued") {
  PhantomSpec spec;
  spec.noise_sigma = 0.0;
  const PhantomCase c = make_ellipsoid_phantom(spec);
  std::set<float> values(c.image.data.begin(), c.image.data.end());
  CHECK(values == std::set<float>{spec.background_intensity, spec.foreground_intensity});
  for (std::size_t i = 0; i < c.image.data.size(); ++i) {
    const bool fg = c.label.data[i] == 1.0f;
    CHECK(c.image.data[i] == (fg ? spec.foreground_intensity : spec.background_intensity));
  }
}

TEST_CASE("the same seed reproduces the phantom bit for bit") {
  PhantomSpec spec;
  spec.noise_sigma = 25.0;
  spec.seed = 42;
  const PhantomCase a = make_ellipsoid_phantom(spec);
  const PhantomCase b = make_ellipsoid_phantom(spec);
  CHECK(a.image.data == b.image.data);
  CHECK(a.label.data == b.label.data);

  spec.seed = 43;
  const PhantomCase other = make_ellipsoid_phantom(spec);
  CHECK(a.image.data != other.image.data);
  CHECK(a.label.data == other.label.data);  // geometry does not depend on the seed
}

TEST_CASE("the mask matches a direct evaluation of the ellipsoid inequality") {
  PhantomSpec spec;
  spec.shape = {40, 36, 20};
  spec.center = {17.25, 20.0, 9.5};
  spec.radii = {11.0, 13.5, 6.25};
  const PhantomCase c = make_ellipsoid_phantom(spec);
  const Volume oracle = testsupport::brute_ellipsoid_mask(spec.shape, spec.center, spec.radii);
  CHECK(c.label.data == oracle.data);
  CHECK(testsupport::count_foreground(c.label) > 100);
}

TEST_CASE("growing a radius never removes foreground voxels") {
  PhantomSpec small;
  small.shape = {48, 48, 24};
  small.center = {23.5, 23.5, 11.5};
  small.radii = {8.0, 10.0, 5.0};
  PhantomSpec big = small;
  big.radii = {12.0, 10.0, 5.0};
  const PhantomCase a = make_ellipsoid_phantom(small);
  const PhantomCase b = make_ellipsoid_phantom(big);
  for (std::size_t i = 0; i < a.label.data.size(); ++i)
    if (a.label.data[i] == 1.0f) CHECK(b.label.data[i] == 1.0f);
  CHECK(testsupport::count_foreground(b.label) > testsupport::count_foreground(a.label));
}

TEST_CASE("an ellipsoid poking out of the grid is rejected") {
  PhantomSpec spec;
  spec.shape = {32, 32, 16};
  spec.center = {16.0, 16.0, 14.0};
  spec.radii = {8.0, 8.0, 6.0};  // reaches z = 20 in a grid that ends at 15
  CHECK_THROWS_AS(make_ellipsoid_phantom(spec), ContractViolation);
}

TEST_CASE("noise leaves the label untouched and perturbs only intensities") {
  PhantomSpec clean;
  clean.noise_sigma = 0.0;
  PhantomSpec noisy = clean;
  noisy.noise_sigma = 10.0;
  const PhantomCase a = make_ellipsoid_phantom(clean);
  const PhantomCase b = make_ellipsoid_phantom(noisy);
  CHECK(a.label.data == b.label.data);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.image.data.size(); ++i) diff += std::abs(double(a.image.data[i] - b.image.data[i]));
  diff /= double(a.image.data.size());
  // Mean |N(0, 10)| is about 8.
  CHECK(diff > 4.0);
  CHECK(diff < 16.0);
}

TEST_CASE("the default phantom uses the working resolution") {
  const PhantomCase c = make_ellipsoid_phantom(PhantomSpec{});
  CHECK(c.image.size == std::array<std::int64_t, 3>{96, 96, 32});
  CHECK(c.image.spacing == std::array<double, 3>{0.625, 0.625, 1.5});
  CHECK(c.label.spacing == c.image.spacing);
  CHECK(c.image.kind == VolumeKind::image);
  CHECK(c.label.kind == VolumeKind::label);
}

TEST_CASE("non-positive radii are rejected") {
  PhantomSpec spec;
  spec.radii = {0.0, 5.0, 5.0};
  CHECK_THROWS_AS(make_ellipsoid_phantom(spec), ContractViolation);
}

}  // TEST_SUITE
