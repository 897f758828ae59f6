#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sev/errors.hpp"
#include "sev/geometry.hpp"

using namespace sev;

TEST_SUITE("geometry") {

TEST_CASE("domain constructors reject degenerate input") {
  CHECK_THROWS_AS(DomainSpec::ball(0.0, 3), config_error);
  CHECK_THROWS_AS(DomainSpec::ball(-1.0, 3), config_error);
  CHECK_THROWS_AS(DomainSpec::ball(1.0, 2), config_error);
  CHECK_THROWS_AS(DomainSpec::box({0.0, -1, -1}, {1, 1, 1}), config_error);
  CHECK_THROWS_AS(DomainSpec::box({-1, -1, -1}, {1, -0.5, 1}), config_error);
  CHECK_NOTHROW(DomainSpec::ball(2.5, 5));
  CHECK_NOTHROW(DomainSpec::box({-1, -2, -0.5}, {0.5, 1, 2}));
}

TEST_CASE("volumes") {
  CHECK(DomainSpec::ball(1.0, 3).volume() ==
        doctest::Approx(4.0 / 3.0 * std::numbers::pi).epsilon(1e-12));
  CHECK(DomainSpec::box({-1, -1, -1}, {1, 1, 1}).volume() == doctest::Approx(8.0));
}

TEST_CASE("radial grid nodes, weights and distances") {
  const Grid g = build_grid(DomainSpec::ball(1.0, 3), 10);
  REQUIRE(g.n() == 10);
  CHECK(g.radial());
  CHECK(g.coords(0, 0) == doctest::Approx(0.05));
  CHECK(g.coords(9, 0) == doctest::Approx(0.95));
  // midpoint-rule weights: O(h^2) away from the exact volume
  CHECK(g.weight.sum() == doctest::Approx(g.domain.volume()).epsilon(1e-2));
  for (Eigen::Index i = 0; i < g.n(); ++i) {
    CHECK(g.dist_origin[i] == doctest::Approx(g.coords(i, 0)));
    CHECK(g.dist_boundary[i] == doctest::Approx(1.0 - g.coords(i, 0)));
    CHECK(g.weight[i] > 0.0);
  }
}

TEST_CASE("box grid distances and exact weight sum") {
  const Grid g = build_grid(DomainSpec::box({-1, -1, -1}, {1, 1, 1}), 8);
  REQUIRE(g.n() == 8 * 8 * 8);
  CHECK_FALSE(g.radial());
  CHECK(g.weight.sum() == doctest::Approx(8.0).epsilon(1e-12));
  for (Eigen::Index i = 0; i < g.n(); ++i) {
    double m = 1.0;
    for (int a = 0; a < 3; ++a) m = std::min(m, 1.0 - std::abs(g.coords(i, a)));
    CHECK(g.dist_boundary[i] == doctest::Approx(m));
    CHECK(g.dist_origin[i] ==
          doctest::Approx(std::hypot(g.coords(i, 0), g.coords(i, 1), g.coords(i, 2))));
  }
}

TEST_CASE("grid resolution floor") {
  CHECK_THROWS_AS(build_grid(DomainSpec::ball(1.0, 3), 7), config_error);
  CHECK_NOTHROW(build_grid(DomainSpec::ball(1.0, 3), 8));
}

TEST_CASE("distance to boundary validates membership") {
  const DomainSpec ball = DomainSpec::ball(1.0, 3);
  const double inside[3] = {0.3, 0.0, 0.0};
  CHECK(distance_to_boundary(ball, inside, 3) == doctest::Approx(0.7));
  const double outside[3] = {1.5, 0.0, 0.0};
  CHECK_THROWS_AS(distance_to_boundary(ball, outside, 3), domain_error);
}

TEST_CASE("annulus mask captures exactly the covered cell centers") {
  const Grid g = build_grid(DomainSpec::ball(1.0, 3), 10);
  const auto mask = k_mask(g, RegionK::annulus(0.2, 0.5));
  std::vector<Eigen::Index> hit;
  for (Eigen::Index i = 0; i < g.n(); ++i)
    if (mask[static_cast<size_t>(i)]) hit.push_back(i);
  // nodes at r = 0.25, 0.35, 0.45; the mask is closed so 0.15 and 0.55 stay out
  REQUIRE(hit.size() == 3);
  CHECK(g.coords(hit[0], 0) == doctest::Approx(0.25));
  CHECK(g.coords(hit[2], 0) == doctest::Approx(0.45));
}

TEST_CASE("empty region masks nothing; a thin region is a resolution failure") {
  const Grid g = build_grid(DomainSpec::ball(1.0, 3), 10);
  const auto none = k_mask(g, RegionK::empty());
  for (auto b : none) CHECK(b == 0);
  CHECK_THROWS_AS(k_mask(g, RegionK::annulus(0.41, 0.44)), resolution_error);
}

TEST_CASE("region outside the domain is rejected") {
  const Grid g = build_grid(DomainSpec::ball(1.0, 3), 10);
  CHECK_THROWS_AS(k_mask(g, RegionK::annulus(0.5, 1.2)), domain_error);
  const Grid gb = build_grid(DomainSpec::box({-1, -1, -1}, {1, 1, 1}), 8);
  CHECK_THROWS_AS(k_mask(gb, RegionK::subbox({-0.5, -0.5, -0.5}, {1.4, 0.5, 0.5})),
                  domain_error);
}

TEST_CASE("subbox mask in a box grid") {
  const Grid g = build_grid(DomainSpec::box({-1, -1, -1}, {1, 1, 1}), 8);
  const auto mask = k_mask(g, RegionK::subbox({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}));
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < g.n(); ++i)
    if (mask[static_cast<size_t>(i)]) {
      ++count;
      for (int a = 0; a < 3; ++a) CHECK(std::abs(g.coords(i, a)) <= 0.5);
    }
  CHECK(count == 4 * 4 * 4);  // centers at +-0.125, +-0.375 per axis
}

TEST_CASE("superharmonic boundary distance holds on the supported domains") {
  CHECK(check_condition_C(DomainSpec::ball(1.0, 4)).holds);
  CHECK(check_condition_C(DomainSpec::box({-1, -1, -1}, {1, 1, 1})).holds);
}

TEST_CASE("joint smallness margin") {
  CHECK(check_condition_N(0.0, 0.0, 3) == doctest::Approx(0.25));
  CHECK(check_condition_N(0.1, 0.1, 3) == doctest::Approx(0.25 - 0.1 - 0.1));
  CHECK(check_condition_N(0.9, 0.0, 5) == doctest::Approx(0.25 - 0.1));
  CHECK(check_condition_N(0.3, 0.0, 3) < 0.0);  // violated but well-formed
  CHECK_THROWS_AS(check_condition_N(-0.1, 0.0, 3), hypothesis_error);
  CHECK_THROWS_AS(check_condition_N(0.0, -0.1, 3), hypothesis_error);
}

}  // TEST_SUITE
