#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "oracles.hpp"
#include "sev/errors.hpp"
#include "sev/functional.hpp"
#include "sev/spectral.hpp"

using namespace sev;

namespace {

struct Fixture {
  std::shared_ptr<const Grid> grid;
  std::shared_ptr<const OperatorSet> ops;
  std::vector<std::uint8_t> mask;

  explicit Fixture(int res = 40, double r_lo = 0.2, double r_hi = 0.5) {
    grid = std::make_shared<Grid>(build_grid(DomainSpec::ball(1.0, 3), res));
    ops = std::make_shared<OperatorSet>(assemble(grid));
    mask = k_mask(*grid, RegionK::annulus(r_lo, r_hi));
  }

  std::vector<std::uint8_t> full() const {
    return std::vector<std::uint8_t>(static_cast<size_t>(grid->n()), 1);
  }
  std::vector<std::uint8_t> none() const {
    return std::vector<std::uint8_t>(static_cast<size_t>(grid->n()), 0);
  }
};

Vec random_vec(Eigen::Index n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

}  // namespace

TEST_SUITE("functional") {

TEST_CASE("context construction enforces the smallness margin") {
  const Fixture fx;
  CHECK_NOTHROW(ProblemContext(fx.ops, NonlinearitySpec::constant(), 1.0, 0.1, 0.1,
                               fx.mask));
  CHECK_THROWS_AS(ProblemContext(fx.ops, NonlinearitySpec::constant(), 1.0, 0.3, 0.0,
                                 fx.mask),
                  hypothesis_error);
  CHECK_THROWS_AS(ProblemContext(fx.ops, NonlinearitySpec::constant(), 1.0, 0.0, 0.0,
                                 std::vector<std::uint8_t>(3, 0)),
                  domain_error);
}

TEST_CASE("zero reaction: energy is the half form and the gradient is the identity") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::zero(), 0.5, 0.05, 0.1, fx.none());
  const Vec u = random_vec(ctx.n(), 21);
  CHECK(energy_J(ctx, u) == doctest::Approx(0.5 * ctx.B(u, u)).epsilon(1e-12));
  CHECK((gradient_B(ctx, u) - u).cwiseAbs().maxCoeff() <= 1e-10 * u.cwiseAbs().maxCoeff());
}

TEST_CASE("directional derivative matches difference quotients") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(), 1.0, 0.1, 0.05, fx.mask);
  for (unsigned s = 0; s < 5; ++s) {
    const Vec u = random_vec(ctx.n(), 100 + s);
    const Vec v = random_vec(ctx.n(), 200 + s);
    const double fd = oracle::central_diff(
        [&](double t) { return energy_J(ctx, u + t * v); }, 0.0, 1e-5);
    const double an = derivative_along(ctx, u, v);
    CHECK(an == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("Riesz identity of the gradient") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(), 0.7, 0.1, 0.1, fx.mask);
  const Vec u = random_vec(ctx.n(), 31);
  const Vec g = gradient_B(ctx, u);
  for (unsigned s = 0; s < 3; ++s) {
    const Vec v = random_vec(ctx.n(), 300 + s);
    CHECK(ctx.B(g, v) == doctest::Approx(derivative_along(ctx, u, v)).epsilon(1e-9));
  }
  CHECK(cerami_residual(ctx, u) ==
        doctest::Approx((1.0 + ctx.norm_B(u)) * ctx.norm_B(g)).epsilon(1e-12));
}

TEST_CASE("coercivity failure surfaces at the first factorization") {
  const Fixture fx;
  // lambda far below the principal eigenvalue makes B indefinite
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(), -50.0, 0.0, 0.0,
                           fx.mask);
  const Vec u = random_vec(ctx.n(), 77);
  CHECK_THROWS_AS(gradient_B(ctx, u), coercivity_error);
}

TEST_CASE("ray maximum of a pure power matches the closed form") {
  const Fixture fx;
  NonlinearitySpec power = NonlinearitySpec::constant(4.0, 2.0, 0.0);
  const ProblemContext ctx(fx.ops, power, 1.0, 0.0, 0.0, fx.full());
  const Vec u = random_vec(ctx.n(), 5).cwiseAbs();
  const double b = ctx.B(u, u);
  double quartic = 0.0;
  for (Eigen::Index i = 0; i < ctx.n(); ++i)
    quartic += fx.ops->mass[i] * 2.0 * std::pow(u[i], 4.0);
  const double t_closed = std::sqrt(b / quartic);
  const double j_closed = b * b / (4.0 * quartic);

  const RayProfile pr = ray_max(ctx, u);
  CHECK_FALSE(pr.plateau);
  CHECK(pr.t_star == doctest::Approx(t_closed).epsilon(1e-6));
  CHECK(pr.j_star == doctest::Approx(j_closed).epsilon(1e-8));
  CHECK(nehari_defect(ctx, Vec(pr.t_star * u)) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("ray scan extends itself beyond the default window") {
  const Fixture fx;
  NonlinearitySpec power = NonlinearitySpec::constant(4.0, 1e-12, 0.0);
  const ProblemContext ctx(fx.ops, power, 1.0, 0.0, 0.0, fx.full());
  const Vec u = random_vec(ctx.n(), 6).cwiseAbs();
  // tiny coupling pushes the turnover far beyond t_max = 1e3
  const RayProfile pr = ray_max(ctx, u);
  CHECK(pr.t_star > 1e3);
  CHECK(nehari_defect(ctx, Vec(pr.t_star * u)) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("a ray that never turns down is a hypothesis failure") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::zero(), 1.0, 0.0, 0.0, fx.none());
  const Vec u = random_vec(ctx.n(), 7);
  CHECK_THROWS_AS(ray_max(ctx, u), ray_range_error);
  CHECK_THROWS_AS(ray_max(ctx, Vec(Vec::Zero(ctx.n()))), domain_error);
}

TEST_CASE("constrained energy and tangent gradient in the linear limit") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::zero(), 0.0, 0.0, 0.0, fx.none());
  const Vec u = random_vec(ctx.n(), 8);
  CHECK(energy_J0(ctx, u) == doctest::Approx(0.5 * ctx.A0(u, u)).epsilon(1e-12));

  // mass-normalized principal eigenvector is a constrained critical point
  const SpectrumReport sr = smallest_eigenpairs(ctx.A0_matrix(), fx.ops->mass, 2, 1e-12);
  const double rho = 1.0;
  Vec v = sr.vectors.col(0);
  const double m = std::sqrt(kernels::weighted_dot(fx.ops->mass, v, v) / rho);
  v /= m;
  const Vec tg = tangent_gradient_J0(ctx, v, rho);
  const double tg_norm = std::sqrt(kernels::weighted_dot(fx.ops->mass, tg, tg));
  CHECK(tg_norm <= 1e-7);
  CHECK(lagrange_lambda(ctx, v, rho) == doctest::Approx(-sr.eigenvalues[0]).epsilon(1e-9));
}

TEST_CASE("tangent gradient is mass-orthogonal to the iterate") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(3.0), 0.0, 0.05, 0.05,
                           fx.mask);
  const double rho = 2.0;
  Vec u = random_vec(ctx.n(), 9);
  u *= std::sqrt(rho / kernels::weighted_dot(fx.ops->mass, u, u));
  const Vec tg = tangent_gradient_J0(ctx, u, rho);
  const double ip = kernels::weighted_dot(fx.ops->mass, tg, u);
  const double scale = std::sqrt(kernels::weighted_dot(fx.ops->mass, tg, tg) * rho);
  CHECK(std::abs(ip) <= 1e-10 * (1.0 + scale));
}

TEST_CASE("mass level must be positive") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::zero(), 0.0, 0.0, 0.0, fx.none());
  const Vec u = random_vec(ctx.n(), 10);
  CHECK_THROWS_AS(tangent_gradient_J0(ctx, u, 0.0), domain_error);
  CHECK_THROWS_AS(lagrange_lambda(ctx, u, -1.0), domain_error);
}

}  // TEST_SUITE
