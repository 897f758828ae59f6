#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sev/errors.hpp"
#include "sev/spectral.hpp"

using namespace sev;

namespace {

OperatorSet ball_ops(int res, int dim = 3, double R = 1.0) {
  return assemble(std::make_shared<Grid>(build_grid(DomainSpec::ball(R, dim), res)));
}

OperatorSet box_ops(int res) {
  return assemble(
      std::make_shared<Grid>(build_grid(DomainSpec::box({-1, -1, -1}, {1, 1, 1}), res)));
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("radial Dirichlet eigenvalues approach the shooting oracle") {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const auto cont = oracle::radial_laplace_eigenvalues(3, 1.0, 3);
  // the oracle itself reproduces the closed form (j pi)^2 in dimension 3
  for (int j = 0; j < 3; ++j)
    CHECK(cont[j] == doctest::Approx((j + 1) * (j + 1) * pi2).epsilon(1e-8));

  const OperatorSet ops = ball_ops(100);
  const SpectrumReport sr = smallest_eigenpairs(ops.L, ops.mass, 3, 1e-10);
  for (int j = 0; j < 3; ++j)
    CHECK(sr.eigenvalues[j] == doctest::Approx(cont[j]).epsilon(5e-3));
  CHECK(sr.eigenvalues[0] == doctest::Approx(9.869854).epsilon(1e-6));
}

TEST_CASE("generalized eigenpairs carry small residuals") {
  const OperatorSet ops = ball_ops(80);
  const SpectrumReport sr = smallest_eigenpairs(ops.L, ops.mass, 4, 1e-10);
  REQUIRE(sr.vectors.cols() == 4);
  REQUIRE(sr.residuals.size() == 4);
  for (int j = 0; j < 4; ++j) CHECK(sr.residuals[j] <= 1e-7);
  // eigenvalues ascend
  for (int j = 1; j < 4; ++j) CHECK(sr.eigenvalues[j] > sr.eigenvalues[j - 1]);
}

TEST_CASE("iterative path agrees with the dense path") {
  const OperatorSet ops = ball_ops(600);
  EigOptions dense;
  dense.dense_threshold = 2000;
  EigOptions iter;
  iter.dense_threshold = 50;  // force the Lanczos route
  const SpectrumReport a = smallest_eigenpairs(ops.L, ops.mass, 3, 1e-8, dense);
  const SpectrumReport b = smallest_eigenpairs(ops.L, ops.mass, 3, 1e-8, iter);
  for (int j = 0; j < 3; ++j)
    CHECK(b.eigenvalues[j] == doctest::Approx(a.eigenvalues[j]).epsilon(1e-8));
  for (int j = 0; j < 3; ++j) CHECK(b.residuals[j] <= 1e-8);

  // fixed seed, repeated call: identical output
  const SpectrumReport b2 = smallest_eigenpairs(ops.L, ops.mass, 3, 1e-8, iter);
  CHECK((b.eigenvalues - b2.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("origin-weight constant stays above its limit and decreases") {
  // frozen regression values for the shipped discretization
  const double c50 = hardy_constant_origin(ball_ops(50));
  const double c100 = hardy_constant_origin(ball_ops(100));
  CHECK(c50 == doctest::Approx(0.401863).epsilon(2e-6));
  CHECK(c100 == doctest::Approx(0.376541).epsilon(2e-6));
  CHECK(c50 > c100);
  CHECK(c100 > 0.25);
}

TEST_CASE("origin-weight constant in dimension five") {
  const double c50 = hardy_constant_origin(ball_ops(50, 5));
  CHECK(c50 == doctest::Approx(2.597334).epsilon(2e-6));
  CHECK(c50 > 2.25);  // (N-2)^2/4 = 9/4
}

TEST_CASE("boundary-weight constant on ball and box") {
  const double b50 = hardy_constant_boundary(ball_ops(50));
  CHECK(b50 == doctest::Approx(0.373000).epsilon(2e-6));
  CHECK(b50 > 0.25);

  const double box8 = hardy_constant_boundary(box_ops(8));
  CHECK(box8 == doctest::Approx(0.50919).epsilon(2e-5));
  CHECK(box8 > 0.25);
}

TEST_CASE("box Dirichlet principal eigenvalue approaches 3 pi^2 / 4 from below") {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const OperatorSet ops = box_ops(8);
  const SpectrumReport sr = smallest_eigenpairs(ops.L, ops.mass, 1, 1e-10);
  CHECK(sr.eigenvalues[0] == doctest::Approx(7.30756).epsilon(2e-5));
  CHECK(sr.eigenvalues[0] < 3.0 * pi2 / 4.0);
}

TEST_CASE("slope-shifted operator spectrum") {
  const OperatorSet ops = ball_ops(60);
  Vec theta = Vec::Constant(ops.n(), 0.5);
  const SpectrumReport sr = spectrum_A(ops, 0.1, 0.1, theta, 3, 1e-10);
  CHECK(sr.theta_sup == doctest::Approx(0.5));
  // strictly above the guaranteed lower bound
  CHECK(sr.eigenvalues[0] > -0.5);
  // with constant slope the whole spectrum is the coupled pencil shifted down
  const SpMat B = build_B_matrix(ops, 0.0, 0.1, 0.1);
  const SpectrumReport plain = smallest_eigenpairs(B, ops.mass, 3, 1e-10);
  for (int j = 0; j < 3; ++j)
    CHECK(sr.eigenvalues[j] == doctest::Approx(plain.eigenvalues[j] - 0.5).epsilon(1e-10));
}

TEST_CASE("adding a constant to the slope shifts the spectrum exactly") {
  const OperatorSet ops = ball_ops(60);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Vec theta(ops.n());
  for (Eigen::Index i = 0; i < ops.n(); ++i) theta[i] = d(rng);
  const double c = 0.37;
  const SpectrumReport base = spectrum_A(ops, 0.05, 0.0, theta, 4, 1e-10);
  const SpectrumReport shifted =
      spectrum_A(ops, 0.05, 0.0, Vec(theta.array() + c), 4, 1e-10);
  for (int j = 0; j < 4; ++j)
    CHECK(std::abs(shifted.eigenvalues[j] - (base.eigenvalues[j] - c)) <= 1e-12);
}

TEST_CASE("resonance margin and the inconclusive window") {
  SpectrumReport sr;
  sr.eigenvalues = Vec(3);
  sr.eigenvalues << 1.0, 2.0, 3.0;
  // -lambda = 0.5 sits below the window top: margin is the nearest distance
  CHECK(check_condition_A(-0.5, sr) == doctest::Approx(0.5));
  CHECK(check_condition_A(-1.8, sr) == doctest::Approx(0.2));
  // -lambda above every computed eigenvalue: cannot certify
  CHECK_THROWS_AS(check_condition_A(-10.0, sr), inconclusive_error);
}

TEST_CASE("sufficient clearance test") {
  CHECK(condition_A_sufficient(0.6, 0.5));
  CHECK_FALSE(condition_A_sufficient(0.4, 0.5));
  CHECK(condition_A_tol(0.0) == doctest::Approx(1e-3));
}

TEST_CASE("input validation") {
  const OperatorSet ops = ball_ops(10);
  CHECK_THROWS_AS(smallest_eigenpairs(ops.L, ops.mass, 0, 1e-8), domain_error);
  CHECK_THROWS_AS(smallest_eigenpairs(ops.L, ops.mass, 11, 1e-8), domain_error);
  CHECK_THROWS_AS(smallest_eigenpairs(ops.L, Vec::Zero(10), 1, 1e-8), domain_error);
  CHECK_THROWS_AS(spectrum_A(ops, 0.0, 0.0, Vec::Ones(3), 1, 1e-8), domain_error);
}

}  // TEST_SUITE
