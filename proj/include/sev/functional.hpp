#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sev/assembly.hpp"
#include "sev/nonlinearity.hpp"

namespace sev {

// Assembled problem: operators, coefficients, reaction term, region mask, and
// the cached factorizations behind gradient evaluations. The joint-smallness
// margin is checked at construction; the quadratic form with the given lambda
// is factorized lazily and a breakdown (indefinite form) surfaces as a
// coercivity failure at first use.
class ProblemContext {
 public:
  ProblemContext(std::shared_ptr<const OperatorSet> ops, NonlinearitySpec spec,
                 double lambda, double mu, double nu, std::vector<std::uint8_t> kmask);

  const OperatorSet& ops() const { return *ops_; }
  std::shared_ptr<const OperatorSet> ops_ptr() const { return ops_; }
  const NonlinearitySpec& spec() const { return spec_; }
  const std::vector<std::uint8_t>& kmask() const { return kmask_; }
  double lambda() const { return lambda_; }
  double mu() const { return mu_; }
  double nu() const { return nu_; }
  double margin() const { return margin_; }
  Eigen::Index n() const { return ops_->n(); }

  // quadratic form and its matrix with the context coefficients
  double B(const Vec& u, const Vec& v) const;
  double norm_B(const Vec& u) const;
  const SpMat& B_matrix() const;
  Vec solve_B(const Vec& rhs) const;  // coercivity failure if indefinite

  // lambda-independent part  L - mu P_o - nu P_b  (positive definite)
  const SpMat& A0_matrix() const;
  Vec solve_A0(const Vec& rhs) const;
  double A0(const Vec& u, const Vec& v) const;
  double norm_A0(const Vec& u) const;

  // reaction-term helpers bound to the mask
  double integral_F(const Vec& u) const;
  Vec weighted_f(const Vec& u) const;      // w_i f(x_i, u_i)
  Vec weighted_df(const Vec& u) const;     // w_i f_u(x_i, u_i)
  double integral_fu(const Vec& u) const;  // sum w_i f(x_i,u_i) u_i

 private:
  std::shared_ptr<const OperatorSet> ops_;
  NonlinearitySpec spec_;
  double lambda_, mu_, nu_, margin_;
  std::vector<std::uint8_t> kmask_;
  struct Cache;
  std::shared_ptr<Cache> cache_;
};

// Energy functional  J(u) = B(u,u)/2 - integral F(x,u).
double energy_J(const ProblemContext& ctx, const Vec& u);

// Directional derivative  J'(u)(v) = B(u,v) - integral f(x,u) v.
double derivative_along(const ProblemContext& ctx, const Vec& u, const Vec& v);

// Riesz gradient in the B inner product:  g = u - B^{-1} W f(u), so that
// B(g, v) = J'(u)(v) for all v. Zero reaction gives g = u exactly.
Vec gradient_B(const ProblemContext& ctx, const Vec& u);

// (1 + ||u||_B) ||gradient_B(u)||_B
double cerami_residual(const ProblemContext& ctx, const Vec& u);

// Scaled Nehari defect  J'(u)(u) / ||u||_B^2 (0 for u = 0).
double nehari_defect(const ProblemContext& ctx, const Vec& u);

struct RayProfile {
  Vec ts;            // sampled scales
  Vec values;        // J(t u)
  double t_star = 0.0;
  double j_star = 0.0;
  bool plateau = false;    // maximum flat within tolerance
  double t_lo = 0.0, t_hi = 0.0;  // plateau extent (equal to t_star when sharp)
};

struct RayOptions {
  double t_min = 1e-3;
  double t_max = 1e3;
  int samples = 61;
  double plateau_rel = 1e-10;
};

// Profile of t -> J(t u) on a log-spaced scan with a golden-section polish of
// the interior maximum. A maximum attained at the right end means the ray
// never turns down (no superlinear escape) and is an error.
RayProfile ray_max(const ProblemContext& ctx, const Vec& u, const RayOptions& opts = {});

// Constraint-problem energy  J0(u) = A0(u,u)/2 - integral F(x,u)  (no lambda).
double energy_J0(const ProblemContext& ctx, const Vec& u);

// Mass-metric Riesz gradient of J0 projected onto the tangent space of the
// sphere  u' M u = rho; vanishes at constrained critical points.
Vec tangent_gradient_J0(const ProblemContext& ctx, const Vec& u, double rho);

// Multiplier read off a constrained critical point: -J0'(u)(u) / rho.
double lagrange_lambda(const ProblemContext& ctx, const Vec& u, double rho);

}  // namespace sev
