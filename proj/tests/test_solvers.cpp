#include <doctest.h>

#include <cmath>
#include <memory>

#include "oracles.hpp"
#include "sev/errors.hpp"
#include "sev/solvers.hpp"
#include "sev/spectral.hpp"

using namespace sev;

namespace {

struct Fixture {
  std::shared_ptr<const Grid> grid;
  std::shared_ptr<const OperatorSet> ops;

  explicit Fixture(int res = 100) {
    grid = std::make_shared<Grid>(build_grid(DomainSpec::ball(1.0, 3), res));
    ops = std::make_shared<OperatorSet>(assemble(grid));
  }

  std::vector<std::uint8_t> full() const {
    return std::vector<std::uint8_t>(static_cast<size_t>(grid->n()), 1);
  }
  std::vector<std::uint8_t> annulus(double lo, double hi) const {
    return k_mask(*grid, RegionK::annulus(lo, hi));
  }
};

NonlinearitySpec pure_power(double gamma = 1.0, double p = 4.0) {
  return NonlinearitySpec::constant(p, gamma, 0.0);
}

int sign_changes(const Vec& u) {
  int c = 0;
  double prev = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (std::abs(u[i]) < 1e-9) continue;
    if (prev != 0.0 && u[i] * prev < 0.0) ++c;
    prev = u[i];
  }
  return c;
}

}  // namespace

TEST_SUITE("solvers") {

TEST_CASE("oscillating seeds live on the support with the requested sign pattern") {
  const Fixture fx(60);
  const auto mask = fx.annulus(0.2, 0.6);
  for (int waves = 1; waves <= 3; ++waves) {
    const Vec s = oscillating_seed(*fx.grid, mask, waves);
    CHECK(s.cwiseAbs().maxCoeff() > 0.0);
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (!mask[static_cast<size_t>(i)]) CHECK(s[i] == 0.0);
    CHECK(sign_changes(s) == waves - 1);
  }
  CHECK_THROWS_AS(oscillating_seed(*fx.grid, mask, 0), domain_error);
  CHECK_THROWS_AS(oscillating_seed(*fx.grid, fx.full(), -1), domain_error);
  CHECK_THROWS_AS(
      oscillating_seed(*fx.grid, std::vector<std::uint8_t>(static_cast<size_t>(fx.grid->n()), 0), 1),
      domain_error);
}

TEST_CASE("saddle search on a pure power converges with an ordered level chain") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, pure_power(), 0.0, 0.0, 0.0, fx.full());
  SolverConfig cfg;
  const SolutionReport rep = mountain_pass(ctx, cfg);
  REQUIRE(rep.converged);
  CHECK(rep.cerami_residual < cfg.cerami_tol);
  CHECK(rep.energy > 0.0);
  CHECK(rep.bracket.sphere_inf > 0.0);
  CHECK(rep.bracket.sphere_inf <= rep.energy * (1.0 + 1e-9));
  CHECK(rep.bracket.q_ray_level >= rep.energy * (1.0 - 1e-9));
  // ground state of the radial problem has one sign
  CHECK(sign_changes(rep.u) == 0);
}

TEST_CASE("saddle search is deterministic for a fixed seed") {
  const Fixture fx(60);
  const ProblemContext ctx(fx.ops, pure_power(), 0.0, 0.0, 0.0, fx.full());
  SolverConfig cfg;
  const SolutionReport a = mountain_pass(ctx, cfg);
  const SolutionReport b = mountain_pass(ctx, cfg);
  CHECK(a.energy == b.energy);
  CHECK((a.u - b.u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constraint-set descent agrees with the saddle search") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, pure_power(), 1.0, 0.1, 0.1, fx.full());
  SolverConfig cfg;
  const SolutionReport mp = mountain_pass(ctx, cfg);
  const SolutionReport ne = nehari_solve(ctx, cfg, fx.full());
  REQUIRE(mp.converged);
  REQUIRE(ne.converged);
  CHECK(ne.energy == doctest::Approx(mp.energy).epsilon(1e-6));
  CHECK(std::abs(ne.nehari_residual) <= 1e-6 * (1.0 + std::abs(ne.energy)));
}

TEST_CASE("both routes agree when the superlinear region is a thin shell") {
  // the seed ridge sits far above the pass level here, which once let a
  // single unbounded descent step tear the path apart
  const Fixture fx(80);
  const auto kmask = fx.annulus(0.2, 0.5);
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(), 1.0, 0.1, 0.1, kmask);
  SolverConfig cfg;
  const SolutionReport mp = mountain_pass(ctx, cfg);
  const SolutionReport ne = nehari_solve(ctx, cfg, fx.full());
  REQUIRE(mp.converged);
  REQUIRE(ne.converged);
  CHECK(ne.energy == doctest::Approx(mp.energy).epsilon(1e-6));
  // a genuine solution leaks out of the shell; staying inside would mean the
  // solve was silently restricted to the region subspace
  double inside = 0.0, outside = 0.0;
  for (Eigen::Index i = 0; i < ne.u.size(); ++i) {
    double& slot = kmask[static_cast<size_t>(i)] ? inside : outside;
    slot = std::max(slot, std::abs(ne.u[i]));
  }
  CHECK(outside > 1e-3 * inside);
}

TEST_CASE("constraint-set solve restricted to the region stays supported there") {
  const Fixture fx;
  const auto qmask = fx.annulus(0.2, 0.7);
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(), 1.0, 0.05, 0.05, qmask);
  SolverConfig cfg;
  const SolutionReport rep = nehari_solve(ctx, cfg, qmask);
  REQUIRE(rep.converged);
  for (Eigen::Index i = 0; i < rep.u.size(); ++i)
    if (!qmask[static_cast<size_t>(i)]) CHECK(rep.u[i] == 0.0);
  CHECK(rep.energy > 0.0);
}

TEST_CASE("solver gates") {
  const Fixture fx(60);
  const ProblemContext neg(fx.ops, pure_power(), -1.0, 0.0, 0.0, fx.full());
  CHECK_THROWS_AS(mountain_pass(neg, SolverConfig{}), hypothesis_error);
  CHECK_THROWS_AS(nehari_solve(neg, SolverConfig{}, fx.full()), hypothesis_error);

  NonlinearitySpec even = pure_power();
  even.odd = false;
  const ProblemContext ctx_even(fx.ops, even, 0.0, 0.0, 0.0, fx.full());
  CHECK_THROWS_AS(multi_solve(ctx_even, SolverConfig{}, 2), hypothesis_error);

  // no active superlinear region: multiplicity is refused
  const ProblemContext ctx_none(fx.ops, NonlinearitySpec::constant(), 0.0, 0.0, 0.0,
                                std::vector<std::uint8_t>(static_cast<size_t>(fx.grid->n()), 0));
  CHECK_THROWS_AS(multi_solve(ctx_none, SolverConfig{}, 2), hypothesis_error);

  // start vector off the constraint subspace
  const auto qmask = fx.annulus(0.3, 0.6);
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(), 1.0, 0.0, 0.0, qmask);
  const Vec bad = Vec::Ones(ctx.n());
  CHECK_THROWS_AS(nehari_solve(ctx, SolverConfig{}, qmask, &bad), domain_error);
}

TEST_CASE("multiplicity run finds ordered distinct sign patterns") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, pure_power(), 0.0, 0.0, 0.0, fx.full());
  SolverConfig cfg;
  const auto reps = multi_solve(ctx, cfg, 2);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].energy < reps[1].energy);
  CHECK(sign_changes(reps[0].u) == 0);
  CHECK(sign_changes(reps[1].u) == 1);
  const double sep = std::min((reps[0].u - reps[1].u).norm(), (reps[0].u + reps[1].u).norm());
  CHECK(sep > cfg.separation_rel * reps[1].u.norm());
}

TEST_CASE("mass-constrained descent recovers the principal eigenpair in the linear limit") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::zero(), 0.0, 0.0, 0.0,
                           std::vector<std::uint8_t>(static_cast<size_t>(fx.grid->n()), 0));
  SolverConfig cfg;
  const SolutionReport rep = normalized_solve(ctx, cfg, 1.0);
  REQUIRE(rep.converged);
  const SpectrumReport sr = smallest_eigenpairs(ctx.A0_matrix(), fx.ops->mass, 1, 1e-12);
  CHECK(rep.multiplier == doctest::Approx(-sr.eigenvalues[0]).epsilon(1e-4));
  CHECK(rep.mass_drift <= 1e-10);
  const double mass = kernels::weighted_dot(fx.ops->mass, rep.u, rep.u);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("mass-supercritical power on an active region is refused") {
  const Fixture fx(60);
  const auto mask = fx.annulus(0.2, 0.6);
  const ProblemContext ctx(fx.ops, NonlinearitySpec::constant(4.0), 0.0, 0.0, 0.0, mask);
  CHECK_THROWS_AS(normalized_solve(ctx, SolverConfig{}, 1.0), hypothesis_error);
  // the same exponent with no active region is fine: saturating branch only
  const ProblemContext off(fx.ops, NonlinearitySpec::constant(4.0), 0.0, 0.0, 0.0,
                           std::vector<std::uint8_t>(static_cast<size_t>(fx.grid->n()), 0));
  CHECK_NOTHROW(normalized_solve(off, SolverConfig{}, 1.0));
}

TEST_CASE("constrained multiplicity matches the first two eigenpairs in the linear limit") {
  const Fixture fx;
  const ProblemContext ctx(fx.ops, NonlinearitySpec::zero(), 0.0, 0.0, 0.0,
                           std::vector<std::uint8_t>(static_cast<size_t>(fx.grid->n()), 0));
  SolverConfig cfg;
  const auto reps = normalized_multi(ctx, cfg, 1.0, 2);
  REQUIRE(reps.size() == 2);
  const SpectrumReport sr = smallest_eigenpairs(ctx.A0_matrix(), fx.ops->mass, 2, 1e-12);
  CHECK(reps[0].multiplier == doctest::Approx(-sr.eigenvalues[0]).epsilon(2e-2));
  CHECK(reps[1].multiplier == doctest::Approx(-sr.eigenvalues[1]).epsilon(2e-2));
  CHECK(reps[0].energy < reps[1].energy);
}

TEST_CASE("iterate traces are kept only on request") {
  const Fixture fx(60);
  const ProblemContext ctx(fx.ops, pure_power(), 0.0, 0.0, 0.0, fx.full());
  SolverConfig cfg;
  const SolutionReport quiet = mountain_pass(ctx, cfg);
  CHECK(quiet.trace.empty());
  cfg.keep_trace = true;
  const SolutionReport traced = mountain_pass(ctx, cfg);
  REQUIRE_FALSE(traced.trace.empty());
  CHECK(traced.trace.front().iter == 0);
  CHECK(traced.trace.back().residual == doctest::Approx(traced.cerami_residual));
}

}  // TEST_SUITE
