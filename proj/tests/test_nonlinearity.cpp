#include <doctest.h>

#include <cmath>
#include <memory>

#include "oracles.hpp"
#include "sev/errors.hpp"
#include "sev/nonlinearity.hpp"

using namespace sev;

namespace {

Grid test_grid(int res = 20) { return build_grid(DomainSpec::ball(1.0, 3), res); }

std::vector<std::uint8_t> annulus_mask(const Grid& g) {
  return k_mask(g, RegionK::annulus(0.2, 0.5));
}

}  // namespace

TEST_SUITE("nonlinearity") {

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(NonlinearitySpec::constant(2.0), config_error);
  CHECK_THROWS_AS(NonlinearitySpec::make(4.0, Vec::Constant(1, 1.0), Vec::Constant(1, 0.5), 0.0),
                  config_error);
  CHECK_THROWS_AS(NonlinearitySpec::make(4.0, Vec::Constant(1, -1.0), Vec::Constant(1, 0.5), 1.0),
                  config_error);
  CHECK_NOTHROW(NonlinearitySpec::constant());
}

TEST_CASE("closed-form primitive values on the saturating branch") {
  // theta = 1/2, u0 = 1 gives slope s = 1: F(u) = (u^2 - log(1+u^2))/2 below
  // the threshold, then F(1) + theta (u^2 - 1)/2 beyond it
  const NonlinearitySpec s = NonlinearitySpec::constant();
  CHECK(eval_F(s, 0, false, 1.0) == doctest::Approx(0.5 * (1.0 - std::log(2.0))));
  CHECK(eval_F(s, 0, false, 2.0) ==
        doctest::Approx(0.5 * (1.0 - std::log(2.0)) + 0.25 * 3.0));
  CHECK(eval_F(s, 0, false, 0.0) == 0.0);
}

TEST_CASE("branch values join continuously at the threshold") {
  const NonlinearitySpec s = NonlinearitySpec::constant(4.0, 1.0, 0.7, 1.3);
  const double eps = 1e-9;
  CHECK(eval_f(s, 0, false, s.u0 - eps) ==
        doctest::Approx(eval_f(s, 0, false, s.u0 + eps)).epsilon(1e-6));
  CHECK(eval_F(s, 0, false, s.u0 - eps) ==
        doctest::Approx(eval_F(s, 0, false, s.u0 + eps)).epsilon(1e-6));
  // the off-region term is linear past the threshold
  CHECK(eval_f(s, 0, false, 10.0) == doctest::Approx(0.7 * 10.0));
  CHECK(eval_df(s, 0, false, 10.0) == doctest::Approx(0.7));
}

TEST_CASE("primitive matches quadrature of the density on both branches") {
  const NonlinearitySpec s = NonlinearitySpec::constant(3.5, 2.0, 0.8, 0.9);
  for (bool in_k : {true, false}) {
    for (double u : {0.3, 0.9, 1.7, -2.4}) {
      CAPTURE(in_k);
      CAPTURE(u);
      const double quad = oracle::adaptive_simpson(
          [&](double t) { return eval_f(s, 0, in_k, t); }, 0.0, u, 1e-13);
      CHECK(eval_F(s, 0, in_k, u) == doctest::Approx(quad).epsilon(1e-9));
    }
  }
}

TEST_CASE("derivative matches difference quotients away from the kink") {
  const NonlinearitySpec s = NonlinearitySpec::constant();
  for (bool in_k : {true, false}) {
    for (double u : {0.4, 0.8, 2.0, -1.6}) {
      CAPTURE(in_k);
      CAPTURE(u);
      const double fd = oracle::central_diff(
          [&](double t) { return eval_f(s, 0, in_k, t); }, u, 1e-6);
      CHECK(eval_df(s, 0, in_k, u) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("odd symmetry of the shipped families") {
  const NonlinearitySpec s = NonlinearitySpec::constant();
  for (bool in_k : {true, false})
    for (double u : {0.3, 1.0, 4.2}) {
      CHECK(eval_f(s, 0, in_k, -u) == doctest::Approx(-eval_f(s, 0, in_k, u)));
      CHECK(eval_F(s, 0, in_k, -u) == doctest::Approx(eval_F(s, 0, in_k, u)));
    }
}

TEST_CASE("slope bound over the off-region nodes") {
  const Grid g = test_grid(10);
  const auto mask = annulus_mask(g);
  Vec theta(g.n());
  for (Eigen::Index i = 0; i < g.n(); ++i) theta[i] = (i % 2 ? -0.9 : 0.4);
  const NonlinearitySpec s =
      NonlinearitySpec::make(4.0, Vec::Constant(1, 1.0), theta, 1.0);
  CHECK(theta_sup(s, mask) == doctest::Approx(0.9));
  // masking every node leaves no off-region slope
  CHECK(theta_sup(s, std::vector<std::uint8_t>(static_cast<size_t>(g.n()), 1)) == 0.0);
}

TEST_CASE("batch evaluators agree with the pointwise loop and their serial twins") {
  const Grid g = test_grid(30);
  const auto mask = annulus_mask(g);
  std::vector<Eigen::Index> node_of(static_cast<size_t>(g.n()));
  for (size_t i = 0; i < node_of.size(); ++i) node_of[i] = static_cast<Eigen::Index>(i);
  const NonlinearitySpec s = NonlinearitySpec::constant();
  Vec u(g.n());
  for (Eigen::Index i = 0; i < g.n(); ++i) u[i] = std::sin(3.0 * i) * 2.0;

  double direct = 0.0;
  for (Eigen::Index i = 0; i < g.n(); ++i)
    direct += g.weight[i] * eval_F(s, i, mask[static_cast<size_t>(i)], u[i]);
  const double ser = batch::serial::integral_F(s, mask, node_of, g.weight, u);
  CHECK(ser == doctest::Approx(direct).epsilon(1e-13));
  CHECK(batch::integral_F(s, mask, node_of, g.weight, u) ==
        doctest::Approx(ser).epsilon(1e-14));

  Vec out_ser(g.n()), out_par(g.n());
  batch::serial::weighted_f(s, mask, node_of, g.weight, u, out_ser);
  batch::weighted_f(s, mask, node_of, g.weight, u, out_par);
  CHECK((out_ser - out_par).cwiseAbs().maxCoeff() == 0.0);
  batch::serial::weighted_df(s, mask, node_of, g.weight, u, out_ser);
  batch::weighted_df(s, mask, node_of, g.weight, u, out_par);
  CHECK((out_ser - out_par).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("structural checks pass for the shipped model") {
  const Grid g = test_grid(10);
  const FConditionReport rep = verify_conditions(NonlinearitySpec::constant(), g,
                                                 annulus_mask(g));
  REQUIRE(rep.conditions.size() == 5);
  for (const FCondition& c : rep.conditions) {
    CAPTURE(c.name);
    CAPTURE(c.note);
    CHECK(c.pass);
  }
  CHECK(rep.all_pass());
}

TEST_CASE("structural checks pass near the lower end of the exponent range") {
  const Grid g = test_grid(10);
  const FConditionReport rep =
      verify_conditions(NonlinearitySpec::constant(2.5), g, annulus_mask(g));
  CHECK(rep.all_pass());
}

TEST_CASE("exponent outside the subcritical window is rejected") {
  const Grid g = test_grid(10);
  CHECK_THROWS_AS(verify_conditions(NonlinearitySpec::constant(6.5), g, annulus_mask(g)),
                  hypothesis_error);
  try {
    verify_conditions(NonlinearitySpec::constant(6.0), g, annulus_mask(g));
    FAIL("critical exponent must be rejected");
  } catch (const hypothesis_error& e) {
    CHECK(e.clause == "p-subcritical");
  }
}

TEST_CASE("a cubic tail off the region trips the linear-tail check") {
  const Grid g = test_grid(10);
  const auto mask = annulus_mask(g);
  const NonlinearitySpec base = NonlinearitySpec::constant();
  // keep the region behavior, replace the off-region branch by u^3
  const auto f = [&](Eigen::Index node, bool in_k, double u) {
    return in_k ? eval_f(base, node, true, u) : u * u * u;
  };
  const auto F = [&](Eigen::Index node, bool in_k, double u) {
    return in_k ? eval_F(base, node, true, u) : 0.25 * u * u * u * u;
  };
  const FConditionReport rep =
      verify_conditions_fn(f, F, 4.0, g, mask, base.u0, FVerifyPlan{});
  bool tail_failed = false;
  for (const FCondition& c : rep.conditions)
    if (c.name == "linear-tail-off-K") tail_failed = !c.pass;
  CHECK(tail_failed);
  CHECK_FALSE(rep.all_pass());
}

TEST_CASE("a merely quadratic primitive on the region trips the superlinearity check") {
  const Grid g = test_grid(10);
  const auto mask = annulus_mask(g);
  const NonlinearitySpec base = NonlinearitySpec::constant();
  const auto f = [&](Eigen::Index node, bool in_k, double u) {
    return in_k ? u : eval_f(base, node, false, u);
  };
  const auto F = [&](Eigen::Index node, bool in_k, double u) {
    return in_k ? 0.5 * u * u : eval_F(base, node, false, u);
  };
  const FConditionReport rep =
      verify_conditions_fn(f, F, 4.0, g, mask, base.u0, FVerifyPlan{});
  bool super_failed = false;
  for (const FCondition& c : rep.conditions)
    if (c.name == "superlinear-on-K") super_failed = !c.pass;
  CHECK(super_failed);
}

TEST_CASE("interpolation exponents split the mass-critical threshold") {
  const GNExponents high = gn_exponents(4.0, 3);
  CHECK(high.delta_p == doctest::Approx(0.75));
  CHECK(high.delta_p_p == doctest::Approx(3.0));
  CHECK_FALSE(high.mass_subcritical);

  const GNExponents low = gn_exponents(3.0, 3);
  CHECK(low.delta_p == doctest::Approx(0.5));
  CHECK(low.delta_p_p == doctest::Approx(1.5));
  CHECK(low.mass_subcritical);

  // straddle the threshold p = 2 + 4/N; exact equality is FP-luck, so test
  // a hair to either side
  CHECK_FALSE(gn_exponents(2.0 + 4.0 / 3.0 + 1e-9, 3).mass_subcritical);
  CHECK(gn_exponents(2.0 + 4.0 / 3.0 - 1e-9, 3).mass_subcritical);
}

}  // TEST_SUITE
