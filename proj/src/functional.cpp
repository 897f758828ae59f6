#include "sev/functional.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>

#include "sev/errors.hpp"

namespace sev {

struct ProblemContext::Cache {
  SpMat Bmat, A0mat;
  Eigen::SimplicialLDLT<SpMat> ldlt_B, ldlt_A0;
  bool B_built = false, B_valid = false;
  bool A0_built = false;
};

ProblemContext::ProblemContext(std::shared_ptr<const OperatorSet> ops, NonlinearitySpec spec,
                               double lambda, double mu, double nu,
                               std::vector<std::uint8_t> kmask)
    : ops_(std::move(ops)),
      spec_(std::move(spec)),
      lambda_(lambda),
      mu_(mu),
      nu_(nu),
      kmask_(std::move(kmask)),
      cache_(std::make_shared<Cache>()) {
  if (!ops_ || !ops_->grid) throw domain_error("problem context needs assembled operators");
  const Eigen::Index gn = ops_->grid->n();
  if (static_cast<Eigen::Index>(kmask_.size()) != gn)
    throw domain_error("mask length does not match the grid");
  if (spec_.gamma.size() != 1 && spec_.gamma.size() != gn)
    throw domain_error("gamma table length does not match the grid");
  if (spec_.theta.size() != 1 && spec_.theta.size() != gn)
    throw domain_error("theta table length does not match the grid");
  margin_ = check_condition_N(mu_, nu_, ops_->grid->domain.dim);
  if (margin_ <= 0.0)
    throw hypothesis_error("N", "joint smallness margin is nonpositive");
}

double ProblemContext::B(const Vec& u, const Vec& v) const {
  return bilinear_B(*ops_, lambda_, mu_, nu_, u, v);
}

double ProblemContext::norm_B(const Vec& u) const {
  return sev::norm_B(*ops_, lambda_, mu_, nu_, u);
}

const SpMat& ProblemContext::B_matrix() const {
  Cache& c = *cache_;
  if (!c.B_built) {
    c.Bmat = build_B_matrix(*ops_, lambda_, mu_, nu_);
    c.ldlt_B.compute(c.Bmat);
    c.B_valid = c.ldlt_B.info() == Eigen::Success &&
                c.ldlt_B.vectorD().minCoeff() > 0.0;
    c.B_built = true;
  }
  return c.Bmat;
}

Vec ProblemContext::solve_B(const Vec& rhs) const {
  B_matrix();
  Cache& c = *cache_;
  if (!c.B_valid)
    throw coercivity_error("quadratic form is not positive definite at this lambda");
  return c.ldlt_B.solve(rhs);
}

const SpMat& ProblemContext::A0_matrix() const {
  Cache& c = *cache_;
  if (!c.A0_built) {
    c.A0mat = build_B_matrix(*ops_, 0.0, mu_, nu_);
    c.ldlt_A0.compute(c.A0mat);
    if (c.ldlt_A0.info() != Eigen::Success || c.ldlt_A0.vectorD().minCoeff() <= 0.0)
      throw theory_error("lambda-free part lost positivity despite a positive margin");
    c.A0_built = true;
  }
  return c.A0mat;
}

Vec ProblemContext::solve_A0(const Vec& rhs) const {
  A0_matrix();
  return cache_->ldlt_A0.solve(rhs);
}

double ProblemContext::A0(const Vec& u, const Vec& v) const {
  return bilinear_B(*ops_, 0.0, mu_, nu_, u, v);
}

double ProblemContext::norm_A0(const Vec& u) const {
  return sev::norm_B(*ops_, 0.0, mu_, nu_, u);
}

double ProblemContext::integral_F(const Vec& u) const {
  return batch::integral_F(spec_, kmask_, ops_->nodes, ops_->mass, u);
}

Vec ProblemContext::weighted_f(const Vec& u) const {
  Vec out;
  batch::weighted_f(spec_, kmask_, ops_->nodes, ops_->mass, u, out);
  return out;
}

Vec ProblemContext::weighted_df(const Vec& u) const {
  Vec out;
  batch::weighted_df(spec_, kmask_, ops_->nodes, ops_->mass, u, out);
  return out;
}

double ProblemContext::integral_fu(const Vec& u) const {
  return kernels::dot(weighted_f(u), u);
}

double energy_J(const ProblemContext& ctx, const Vec& u) {
  return 0.5 * ctx.B(u, u) - ctx.integral_F(u);
}

double derivative_along(const ProblemContext& ctx, const Vec& u, const Vec& v) {
  return ctx.B(u, v) - kernels::dot(ctx.weighted_f(u), v);
}

Vec gradient_B(const ProblemContext& ctx, const Vec& u) {
  return u - ctx.solve_B(ctx.weighted_f(u));
}

double cerami_residual(const ProblemContext& ctx, const Vec& u) {
  const Vec g = gradient_B(ctx, u);
  return (1.0 + ctx.norm_B(u)) * ctx.norm_B(g);
}

double nehari_defect(const ProblemContext& ctx, const Vec& u) {
  const double n2 = ctx.B(u, u);
  if (n2 <= 0.0) return 0.0;
  return derivative_along(ctx, u, u) / n2;
}

RayProfile ray_max(const ProblemContext& ctx, const Vec& u, const RayOptions& opts) {
  if (u.size() != ctx.n()) throw domain_error("vector length does not match the context");
  const double b_uu = ctx.B(u, u);
  if (!(b_uu > 0.0)) throw domain_error("ray needs a nonzero direction");

  auto J_at = [&](double t) { return 0.5 * t * t * b_uu - ctx.integral_F(t * u); };

  double lo = opts.t_min, hi = opts.t_max;
  const int per_decade =
      std::max(2, static_cast<int>(opts.samples / std::log10(opts.t_max / opts.t_min)));

  RayProfile prof;
  for (int attempt = 0;; ++attempt) {
    const int ns = std::max(opts.samples,
                            1 + static_cast<int>(per_decade * std::log10(hi / lo)));
    prof.ts.resize(ns);
    prof.values.resize(ns);
    Eigen::Index imax = 0;
    for (int j = 0; j < ns; ++j) {
      const double t = lo * std::pow(hi / lo, static_cast<double>(j) / (ns - 1));
      prof.ts[j] = t;
      prof.values[j] = J_at(t);
      if (prof.values[j] > prof.values[imax]) imax = j;
    }
    if (imax == 0 && lo > 1e-12) {
      lo /= 100.0;
      continue;
    }
    if (imax == ns - 1) {
      if (hi < 1e12) {
        hi *= 100.0;
        continue;
      }
      throw ray_range_error("energy along the ray never turns down; no superlinear escape");
    }

    // golden-section polish on the bracketing log-interval
    double a = std::log(prof.ts[imax - 1]), b = std::log(prof.ts[imax + 1]);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = J_at(std::exp(x1)), f2 = J_at(std::exp(x2));
    for (int it = 0; it < 80 && (b - a) > 1e-13; ++it) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = J_at(std::exp(x2));
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = J_at(std::exp(x1));
      }
    }
    prof.t_star = std::exp(0.5 * (a + b));
    prof.j_star = J_at(prof.t_star);

    // flat-top detection: how far J stays within tolerance of the maximum
    const double ptol = opts.plateau_rel * (1.0 + std::abs(prof.j_star));
    auto edge = [&](double dir) {
      double t_in = prof.t_star;
      double t_out = prof.t_star;
      for (int s = 0; s < 200; ++s) {
        t_out *= dir > 0 ? 1.01 : 1.0 / 1.01;
        if (J_at(t_out) < prof.j_star - ptol) break;
        t_in = t_out;
        if (t_out > 1e14 || t_out < 1e-14) break;
      }
      for (int s = 0; s < 60; ++s) {
        const double mid = std::sqrt(t_in * t_out);
        if (J_at(mid) >= prof.j_star - ptol) t_in = mid;
        else t_out = mid;
      }
      return t_in;
    };
    prof.t_lo = edge(-1.0);
    prof.t_hi = edge(+1.0);
    // a smooth quadratic maximum is flat to within ptol over ~sqrt(ptol)
    // relative width; only a substantially wider shelf counts as a plateau
    prof.plateau = (prof.t_hi - prof.t_lo) > 0.05 * prof.t_star;
    if (prof.plateau) {
      prof.t_star = 0.5 * (prof.t_lo + prof.t_hi);
      prof.j_star = J_at(prof.t_star);
    }
    return prof;
  }
}

double energy_J0(const ProblemContext& ctx, const Vec& u) {
  return 0.5 * ctx.A0(u, u) - ctx.integral_F(u);
}

Vec tangent_gradient_J0(const ProblemContext& ctx, const Vec& u, double rho) {
  if (!(rho > 0.0)) throw domain_error("mass level must be positive");
  const Vec A0u = kernels::spmv(ctx.A0_matrix(), u);
  const Vec Wf = ctx.weighted_f(u);
  Vec g = (A0u - Wf).cwiseQuotient(ctx.ops().mass);
  const double gu = kernels::weighted_dot(ctx.ops().mass, g, u);
  return g - (gu / rho) * u;
}

double lagrange_lambda(const ProblemContext& ctx, const Vec& u, double rho) {
  if (!(rho > 0.0)) throw domain_error("mass level must be positive");
  return -(ctx.A0(u, u) - ctx.integral_fu(u)) / rho;
}

}  // namespace sev
