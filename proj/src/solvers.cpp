#include "sev/solvers.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "sev/errors.hpp"

namespace sev {

namespace {

void push_trace(std::vector<IterRecord>& tr, bool keep, int it, double energy, double res,
                double step) {
  if (keep) tr.push_back({it, energy, res, step});
}

// tent profile over the masked region: distance to the nearest node outside
// the mask, capped by the boundary distance; zero off the mask
Vec tent_profile(const Grid& grid, const std::vector<std::uint8_t>& mask) {
  const Eigen::Index n = grid.n();
  std::vector<Eigen::Index> outside;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!mask[static_cast<size_t>(i)]) outside.push_back(i);

  Vec tent = Vec::Zero(n);
  const int dim = static_cast<int>(grid.coords.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    double d = grid.dist_boundary[i];
    for (Eigen::Index j : outside) {
      double s = 0.0;
      for (int a = 0; a < dim; ++a) {
        const double dx = grid.coords(i, a) - grid.coords(j, a);
        s += dx * dx;
      }
      d = std::min(d, std::sqrt(s));
    }
    tent[i] = d;
  }
  return tent;
}

struct SphereSampler {
  const ProblemContext& ctx;
  std::mt19937_64 rng;

  LevelBracket bracket_below(double target_norm) {
    std::normal_distribution<double> gauss;
    const Eigen::Index n = ctx.n();
    LevelBracket br;
    double r = std::max(target_norm / 3.0, 1e-8);
    for (int h = 0; h < 25; ++h) {
      double inf = std::numeric_limits<double>::infinity();
      for (int s = 0; s < 48; ++s) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
        const double nb = ctx.norm_B(v);
        if (nb <= 0.0) continue;
        inf = std::min(inf, energy_J(ctx, (r / nb) * v));
      }
      br.sphere_radius = r;
      br.sphere_inf = inf;
      if (inf > 0.0) return br;
      r *= 0.5;
    }
    return br;
  }
};

// distinctness up to sign, in the norm provided
template <class Norm>
bool is_distinct(const std::vector<SolutionReport>& found, const Vec& u, Norm&& nrm,
                 double sep_rel) {
  for (const SolutionReport& r : found) {
    const double scale = std::max(nrm(u), nrm(r.u));
    const double d = std::min(nrm(u - r.u), nrm(u + r.u));
    if (d <= sep_rel * scale) return false;
  }
  return true;
}

// Subspace of vectors supported on a row mask, with the restricted quadratic
// form factorized for Riesz gradients inside the subspace.
struct QSpace {
  std::vector<Eigen::Index> rows;  // ops rows in the subspace
  bool full = false;
  SpMat Bq;
  Eigen::SimplicialLDLT<SpMat> ldlt;

  QSpace(const ProblemContext& ctx, const std::vector<std::uint8_t>& qmask) {
    const Eigen::Index n = ctx.n();
    if (static_cast<Eigen::Index>(qmask.size()) != n)
      throw domain_error("subspace mask length does not match the context");
    for (Eigen::Index i = 0; i < n; ++i)
      if (qmask[static_cast<size_t>(i)]) rows.push_back(i);
    if (rows.empty()) throw domain_error("subspace mask selects no node");
    full = static_cast<Eigen::Index>(rows.size()) == n;
    if (!full) {
      std::vector<Eigen::Index> newidx(static_cast<size_t>(n), -1);
      for (size_t r = 0; r < rows.size(); ++r)
        newidx[static_cast<size_t>(rows[r])] = static_cast<Eigen::Index>(r);
      const SpMat& B = ctx.B_matrix();
      std::vector<Eigen::Triplet<double>> t;
      for (Eigen::Index c = 0; c < n; ++c) {
        const Eigen::Index nc = newidx[static_cast<size_t>(c)];
        if (nc < 0) continue;
        for (SpMat::InnerIterator it(B, c); it; ++it) {
          const Eigen::Index nr = newidx[static_cast<size_t>(it.row())];
          if (nr >= 0) t.emplace_back(nr, nc, it.value());
        }
      }
      const Eigen::Index nk = static_cast<Eigen::Index>(rows.size());
      Bq.resize(nk, nk);
      Bq.setFromTriplets(t.begin(), t.end());
      Bq.makeCompressed();
      ldlt.compute(Bq);
      if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw coercivity_error("restricted quadratic form is not positive definite");
    }
  }

  // Riesz gradient of J restricted to the subspace, lifted back to full rows
  Vec gradient(const ProblemContext& ctx, const Vec& u, double& norm_out) const {
    const Vec resid = kernels::spmv(ctx.B_matrix(), u) - ctx.weighted_f(u);
    if (full) {
      Vec g = ctx.solve_B(resid);
      norm_out = ctx.norm_B(g);
      return g;
    }
    Vec rq(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) rq[static_cast<Eigen::Index>(r)] = resid[rows[r]];
    const Vec gq = ldlt.solve(rq);
    norm_out = std::sqrt(std::max(gq.dot(rq), 0.0));  // g' Bq g = g' rq
    Vec g = Vec::Zero(u.size());
    for (size_t r = 0; r < rows.size(); ++r) g[rows[r]] = gq[static_cast<Eigen::Index>(r)];
    return g;
  }
};

struct NehariIterResult {
  Vec u;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
  std::vector<IterRecord> trace;
};

// Minimize the ray-max functional m(v) = max_t J(t v) by projected descent in
// the subspace, keeping the iterate exactly ray-rescaled. m has the same
// value and derivative as J on the constraint set, so Armijo on m with the
// J-gradient slope is consistent.
// optional orth: keep the iterate B-orthogonal to already-found solutions,
// steering the descent into the next basin before the Newton finish
NehariIterResult nehari_iteration(const ProblemContext& ctx, const SolverConfig& cfg,
                                  const QSpace& q, const Vec& u0) {
  NehariIterResult out;
  RayProfile pr = ray_max(ctx, u0);  // throws domain_error on a vanished seed
  Vec u = pr.t_star * u0;
  double m_u = pr.j_star;

  for (int it = 0; it < cfg.max_iter; ++it) {
    out.iterations = it + 1;
    double gnorm = 0.0;
    const Vec g = q.gradient(ctx, u, gnorm);
    const double res = (1.0 + ctx.norm_B(u)) * gnorm;
    if (res <= cfg.cerami_tol) {
      push_trace(out.trace, cfg.keep_trace, it, m_u, res, 0.0);
      out.converged = true;
      break;
    }
    if (ctx.norm_B(u) > cfg.norm_cap) break;

    const double slope = -gnorm * gnorm;
    double s = cfg.step_init;
    bool accepted = false;
    while (s > 1e-14) {
      const Vec w = u - s * g;
      double m_w;
      double t_w = 1.0;
      try {
        RayProfile pw = ray_max(ctx, w);
        m_w = pw.j_star;
        t_w = pw.t_star;
      } catch (const ray_range_error&) {
        s *= cfg.step_shrink;
        continue;
      } catch (const domain_error&) {  // w collapsed to zero
        s *= cfg.step_shrink;
        continue;
      }
      if (m_w <= m_u + cfg.armijo * s * slope) {
        u = t_w * w;
        m_u = m_w;
        accepted = true;
        break;
      }
      s *= cfg.step_shrink;
    }
    push_trace(out.trace, cfg.keep_trace, it, m_u, res, accepted ? s : 0.0);
    if (!accepted) {
      out.stalled = true;
      break;
    }
  }
  out.u = u;
  return out;
}

// Damped Newton for B u = W f(u) restricted to the subspace. The first-order
// phases stop making progress a little above the target residual (the Armijo
// decrease falls under evaluation noise); this finishes quadratically.
bool subspace_newton(const ProblemContext& ctx, const SolverConfig& cfg, const QSpace& q,
                     Vec& u, int& iterations, std::vector<IterRecord>& trace, bool keep) {
  const Eigen::Index n = ctx.n();
  const SpMat& B = ctx.B_matrix();
  const Eigen::Index nq = q.full ? n : static_cast<Eigen::Index>(q.rows.size());

  auto res_norm = [&](const Vec& v) {
    double gn = 0.0;
    q.gradient(ctx, v, gn);
    return (1.0 + ctx.norm_B(v)) * gn;
  };

  std::vector<Eigen::Index> newidx;
  if (!q.full) {
    newidx.assign(static_cast<size_t>(n), -1);
    for (size_t r = 0; r < q.rows.size(); ++r)
      newidx[static_cast<size_t>(q.rows[r])] = static_cast<Eigen::Index>(r);
  }

  double res = res_norm(u);
  for (int it = 0; it < cfg.newton_max && res > cfg.cerami_tol; ++it) {
    ++iterations;
    const Vec F = kernels::spmv(B, u) - ctx.weighted_f(u);
    const Vec wdf = ctx.weighted_df(u);

    auto build = [&](double reg) {
      SpMat Jm;
      if (q.full) {
        Jm = B;
        for (Eigen::Index i = 0; i < n; ++i) Jm.coeffRef(i, i) -= wdf[i];
      } else {
        std::vector<Eigen::Triplet<double>> t;
        for (Eigen::Index c = 0; c < n; ++c) {
          const Eigen::Index nc = newidx[static_cast<size_t>(c)];
          if (nc < 0) continue;
          for (SpMat::InnerIterator itr(B, c); itr; ++itr) {
            const Eigen::Index nr = newidx[static_cast<size_t>(itr.row())];
            if (nr >= 0) t.emplace_back(nr, nc, itr.value());
          }
        }
        for (size_t r = 0; r < q.rows.size(); ++r)
          t.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r),
                         -wdf[q.rows[r]]);
        Jm.resize(nq, nq);
        Jm.setFromTriplets(t.begin(), t.end());
      }
      if (reg > 0.0)
        for (Eigen::Index i = 0; i < nq; ++i)
          Jm.coeffRef(i, i) += reg * (1.0 + std::abs(Jm.coeff(i, i)));
      Jm.makeCompressed();
      return Jm;
    };

    Vec Fq;
    if (q.full) {
      Fq = F;
    } else {
      Fq.resize(nq);
      for (size_t r = 0; r < q.rows.size(); ++r)
        Fq[static_cast<Eigen::Index>(r)] = F[q.rows[r]];
    }

    Vec yq;
    bool solved = false;
    for (double reg : {0.0, 1e-10, 1e-8}) {
      Eigen::SparseLU<SpMat> lu;
      lu.compute(build(reg));
      if (lu.info() != Eigen::Success) continue;
      yq = lu.solve(Fq);
      if (yq.allFinite()) {
        solved = true;
        break;
      }
    }
    if (!solved) break;
    Vec y;
    if (q.full) {
      y = yq;
    } else {
      y = Vec::Zero(n);
      for (size_t r = 0; r < q.rows.size(); ++r)
        y[q.rows[r]] = yq[static_cast<Eigen::Index>(r)];
    }

    bool accepted = false;
    for (double alpha = 1.0; alpha > 1e-12; alpha *= 0.5) {
      const Vec trial = u - alpha * y;
      const double res_t = res_norm(trial);
      if (res_t <= (1.0 - 1e-4 * alpha) * res) {
        u = trial;
        res = res_t;
        accepted = true;
        push_trace(trace, keep, iterations, energy_J(ctx, u), res, alpha);
        break;
      }
    }
    if (!accepted) break;
  }
  return res <= cfg.cerami_tol;
}

void fill_unconstrained_report(const ProblemContext& ctx, const SolverConfig& cfg,
                               SolutionReport& rep) {
  rep.energy = energy_J(ctx, rep.u);
  rep.nehari_residual = std::abs(derivative_along(ctx, rep.u, rep.u));
  SphereSampler sampler{ctx, std::mt19937_64(cfg.seed ^ 0x5eedba11u)};
  rep.bracket = sampler.bracket_below(ctx.norm_B(rep.u));
  try {
    rep.bracket.q_ray_level = ray_max(ctx, rep.u).j_star;
  } catch (const std::runtime_error&) {
    rep.bracket.q_ray_level = rep.energy;
  }
}

void require_unconstrained_gates(const ProblemContext& ctx) {
  if (ctx.lambda() < 0.0)
    throw hypothesis_error("lambda-sign",
                           "unconstrained solve needs a nonnegative spectral shift");
}

// deflation factor and the scalar used to rescale the Newton step
struct Deflation {
  const std::vector<SolutionReport>* found = nullptr;
  bool constrained = false;  // use the mass norm instead of the energy norm

  double factor(const ProblemContext& ctx, const Vec& u) const {
    if (!found) return 1.0;
    double gamma = 1.0;
    for (const SolutionReport& r : *found)
      for (double sgn : {1.0, -1.0}) {
        const Vec d = u - sgn * r.u;
        const double d2 = constrained
                              ? kernels::weighted_dot(ctx.ops().mass, d, d)
                              : std::max(ctx.B(d, d), 0.0);
        gamma *= 1.0 + 1.0 / std::max(d2, 1e-300);
      }
    return gamma;
  }
};

SolutionReport newton_polish(const ProblemContext& ctx, const SolverConfig& cfg,
                             const Vec& u_start,
                             const std::vector<SolutionReport>& found,
                             std::uint64_t perturb_seed) {
  SolutionReport rep;
  Vec u = u_start;
  Deflation defl{&found, false};
  std::mt19937_64 rng(perturb_seed);
  std::normal_distribution<double> gauss;
  int perturbs = 0;

  const SpMat& B = ctx.B_matrix();
  const Eigen::Index n = ctx.n();

  auto merit = [&](const Vec& v, double& res_out) {
    const Vec F = kernels::spmv(B, v) - ctx.weighted_f(v);
    const Vec g = ctx.solve_B(F);
    const double gn = ctx.norm_B(g);
    res_out = (1.0 + ctx.norm_B(v)) * gn;
    return defl.factor(ctx, v) * gn;
  };

  for (int it = 0; it < cfg.newton_max; ++it) {
    rep.iterations = it + 1;
    const Vec F = kernels::spmv(B, u) - ctx.weighted_f(u);
    const Vec g = ctx.solve_B(F);
    const double res = (1.0 + ctx.norm_B(u)) * ctx.norm_B(g);
    push_trace(rep.trace, cfg.keep_trace, it, energy_J(ctx, u), res, 0.0);
    if (res <= cfg.cerami_tol) {
      rep.converged = true;
      break;
    }
    if (ctx.norm_B(u) > cfg.norm_cap) break;

    // Newton direction for B u = W f(u)
    SpMat Jm = B;
    const Vec wdf = ctx.weighted_df(u);
    for (Eigen::Index i = 0; i < n; ++i) Jm.coeffRef(i, i) -= wdf[i];
    Jm.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(Jm);
    Vec y;
    if (lu.info() == Eigen::Success) {
      y = lu.solve(F);
    } else {
      SpMat Jr = Jm;
      for (Eigen::Index i = 0; i < n; ++i) Jr.coeffRef(i, i) += 1e-10 * (1.0 + std::abs(Jm.coeff(i, i)));
      lu.compute(Jr);
      if (lu.info() != Eigen::Success) break;
      y = lu.solve(F);
    }

    // scalar deflation rescales the step; see the factor above
    double c = 1.0;
    if (!found.empty()) {
      const double gamma = defl.factor(ctx, u);
      Vec b = Vec::Zero(n);
      for (const SolutionReport& r : found)
        for (double sgn : {1.0, -1.0}) {
          const Vec d = u - sgn * r.u;
          const double d2 = std::max(ctx.B(d, d), 1e-300);
          const double phi = 1.0 + 1.0 / d2;
          b += (-2.0 / (d2 * d2) / phi) * kernels::spmv(B, d);
        }
      b *= gamma;
      const double s = b.dot(y);
      c = gamma / (gamma + s);
      if (!std::isfinite(c) || std::abs(c) < 1e-8) c = 1e-8;  // keep moving
    }

    double res_u = 0.0;
    const double m_u = merit(u, res_u);
    double alpha = 1.0;
    bool accepted = false;
    while (alpha > 1e-10) {
      const Vec trial = u - alpha * c * y;
      double res_t = 0.0;
      const double m_t = merit(trial, res_t);
      if (m_t <= (1.0 - 1e-4 * alpha) * m_u) {
        u = trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (++perturbs > 3) break;
      Vec eta(n);
      for (Eigen::Index i = 0; i < n; ++i) eta[i] = gauss(rng);
      const double en = ctx.norm_B(eta);
      if (en > 0.0) u += (0.05 * std::max(ctx.norm_B(u), 1.0) / en) * eta;
    }
  }

  rep.u = u;
  rep.cerami_residual = cerami_residual(ctx, u);
  rep.converged = rep.cerami_residual <= cfg.cerami_tol;
  return rep;
}

}  // namespace

Vec oscillating_seed(const Grid& grid, const std::vector<std::uint8_t>& support_mask,
                     int waves) {
  if (static_cast<Eigen::Index>(support_mask.size()) != grid.n())
    throw domain_error("mask length does not match the grid");
  if (waves < 1) throw domain_error("wave count must be at least 1");
  Vec tent = tent_profile(grid, support_mask);
  if (tent.cwiseAbs().maxCoeff() == 0.0)
    throw domain_error("seed support mask selects no node");

  // oscillation coordinate: first coordinate, normalized over the support
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < grid.n(); ++i)
    if (support_mask[static_cast<size_t>(i)]) {
      lo = std::min(lo, grid.coords(i, 0));
      hi = std::max(hi, grid.coords(i, 0));
    }
  Vec seed = Vec::Zero(grid.n());
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index i = 0; i < grid.n(); ++i) {
    if (!support_mask[static_cast<size_t>(i)]) continue;
    const double xi = hi > lo ? (grid.coords(i, 0) - lo) / span : 0.5;
    seed[i] = tent[i] * std::sin(waves * std::numbers::pi_v<double> * xi);
  }
  if (seed.cwiseAbs().maxCoeff() == 0.0) seed = tent;  // degenerate support
  return seed;
}

SolutionReport mountain_pass(const ProblemContext& ctx, const SolverConfig& cfg) {
  require_unconstrained_gates(ctx);
  const int P = std::max(cfg.path_nodes, 11);
  const Eigen::Index n = ctx.n();

  // downhill endpoint along a superlinear-supported ray
  bool any_k = std::any_of(ctx.kmask().begin(), ctx.kmask().end(),
                           [](std::uint8_t m) { return m != 0; });
  std::vector<std::uint8_t> support =
      any_k ? ctx.kmask() : std::vector<std::uint8_t>(static_cast<size_t>(n), 1);
  Vec dir = oscillating_seed(*ctx.ops().grid, support, 1);
  RayProfile pr = ray_max(ctx, dir);  // throws when the ray never turns down
  double te = pr.t_star;
  double target = -std::max(std::abs(pr.j_star), 1e-6);
  for (int d = 0; d < 200 && energy_J(ctx, te * dir) > target; ++d) te *= 1.5;
  const Vec e = te * dir;
  if (energy_J(ctx, e) > target)
    throw ray_range_error("no downhill endpoint found along the seed ray");

  std::vector<Vec> path(static_cast<size_t>(P));
  for (int j = 0; j < P; ++j)
    path[static_cast<size_t>(j)] = (static_cast<double>(j) / (P - 1)) * e;

  SolutionReport rep;
  std::vector<double> energy(static_cast<size_t>(P));
  double best_e = std::numeric_limits<double>::infinity();
  int flat = 0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    rep.iterations = it + 1;
    int jmax = 1;
    for (int j = 0; j < P; ++j) {
      energy[static_cast<size_t>(j)] = energy_J(ctx, path[static_cast<size_t>(j)]);
      if (j >= 1 && j <= P - 2 && energy[static_cast<size_t>(j)] > energy[static_cast<size_t>(jmax)])
        jmax = j;
    }
    Vec& x = path[static_cast<size_t>(jmax)];
    const Vec g = gradient_B(ctx, x);
    const double gnorm = ctx.norm_B(g);
    const double res = (1.0 + ctx.norm_B(x)) * gnorm;
    push_trace(rep.trace, cfg.keep_trace, it, energy[static_cast<size_t>(jmax)], res, 0.0);
    if (res <= cfg.cerami_tol) {
      rep.u = x;
      rep.converged = true;
      break;
    }
    // the respacing trades level accuracy for path quality; once the level
    // stops moving, the local polish below takes over
    if (energy[static_cast<size_t>(jmax)] <
        best_e - 1e-10 * (1.0 + std::abs(energy[static_cast<size_t>(jmax)]))) {
      best_e = energy[static_cast<size_t>(jmax)];
      flat = 0;
    } else if (++flat >= 25) {
      rep.u = x;
      break;
    }
    if (ctx.norm_B(x) > cfg.norm_cap)
      throw solver_error("path iterate exceeded the norm cap; check the resonance "
                         "clearance of the spectral shift");

    // Armijo descent on the maximal interior node. One move may not exceed
    // the inter-node spacing: a longer jump leaves the tube the polyline
    // samples and the discrete max stops bracketing the pass level.
    double arclen = 0.0;
    for (int j = 1; j < P; ++j)
      arclen += ctx.norm_B(path[static_cast<size_t>(j)] - path[static_cast<size_t>(j - 1)]);
    const double slope = -gnorm * gnorm;
    const double e_x = energy[static_cast<size_t>(jmax)];
    double s = std::min(cfg.step_init, arclen / ((P - 1) * std::max(gnorm, 1e-300)));
    bool accepted = false;
    while (s > 1e-14) {
      const Vec trial = x - s * g;
      if (energy_J(ctx, trial) <= e_x + cfg.armijo * s * slope) {
        x = trial;
        accepted = true;
        break;
      }
      s *= cfg.step_shrink;
    }
    if (!accepted) {
      rep.u = x;
      break;  // stalled; reported unconverged with the attained residual
    }
    if (cfg.keep_trace) rep.trace.back().step = s;

    // re-parametrize the polyline to uniform arc length, endpoints pinned
    std::vector<double> cum(static_cast<size_t>(P), 0.0);
    for (int j = 1; j < P; ++j)
      cum[static_cast<size_t>(j)] = cum[static_cast<size_t>(j - 1)] +
                                    ctx.norm_B(path[static_cast<size_t>(j)] -
                                               path[static_cast<size_t>(j - 1)]);
    const double total = cum[static_cast<size_t>(P - 1)];
    if (total > 0.0) {
      std::vector<Vec> fresh(static_cast<size_t>(P));
      fresh[0] = path[0];
      fresh[static_cast<size_t>(P - 1)] = path[static_cast<size_t>(P - 1)];
      int seg = 1;
      for (int j = 1; j < P - 1; ++j) {
        const double target_s = total * j / (P - 1);
        while (seg < P - 1 && cum[static_cast<size_t>(seg)] < target_s) ++seg;
        const double s0 = cum[static_cast<size_t>(seg - 1)];
        const double s1 = cum[static_cast<size_t>(seg)];
        const double a = s1 > s0 ? (target_s - s0) / (s1 - s0) : 0.0;
        fresh[static_cast<size_t>(j)] = (1.0 - a) * path[static_cast<size_t>(seg - 1)] +
                                        a * path[static_cast<size_t>(seg)];
      }
      path = std::move(fresh);
    }
  }
  if (rep.u.size() == 0) {
    int jmax = 1;
    for (int j = 2; j <= P - 2; ++j)
      if (energy_J(ctx, path[static_cast<size_t>(j)]) >
          energy_J(ctx, path[static_cast<size_t>(jmax)]))
        jmax = j;
    rep.u = path[static_cast<size_t>(jmax)];
  }
  if (!rep.converged) {
    const std::vector<std::uint8_t> allq(static_cast<size_t>(n), 1);
    const QSpace qfull(ctx, allq);
    Vec u = rep.u;
    if (subspace_newton(ctx, cfg, qfull, u, rep.iterations, rep.trace, cfg.keep_trace) &&
        energy_J(ctx, u) > 1e-12)
      rep.u = u;
  }
  rep.cerami_residual = cerami_residual(ctx, rep.u);
  rep.converged = rep.cerami_residual <= cfg.cerami_tol;
  rep.seed_note = "path endpoint from tent-profile ray";
  fill_unconstrained_report(ctx, cfg, rep);
  return rep;
}

SolutionReport nehari_solve(const ProblemContext& ctx, const SolverConfig& cfg,
                            const std::vector<std::uint8_t>& qmask, const Vec* start) {
  require_unconstrained_gates(ctx);
  QSpace q(ctx, qmask);
  Vec u0;
  if (start) {
    if (start->size() != ctx.n())
      throw domain_error("start vector length does not match the context");
    for (Eigen::Index i = 0; i < ctx.n(); ++i)
      if (!qmask[static_cast<size_t>(i)] && (*start)[i] != 0.0)
        throw domain_error("start vector is not supported on the constraint subspace");
    u0 = *start;
  } else {
    // seed where the superlinear region lives; a full-domain bump starts the
    // descent in the basin of a higher concentrated level when K is small
    std::vector<std::uint8_t> support = qmask;
    bool any = false;
    for (size_t i = 0; i < support.size(); ++i) {
      support[i] = static_cast<std::uint8_t>(support[i] && ctx.kmask()[i]);
      any = any || support[i];
    }
    u0 = oscillating_seed(*ctx.ops().grid, any ? support : qmask, 1);
  }

  NehariIterResult it = nehari_iteration(ctx, cfg, q, u0);
  SolutionReport rep;
  rep.u = it.u;
  rep.iterations = it.iterations;
  rep.converged = it.converged;
  rep.trace = std::move(it.trace);
  if (!rep.converged) {
    Vec u = rep.u;
    if (subspace_newton(ctx, cfg, q, u, rep.iterations, rep.trace, cfg.keep_trace) &&
        energy_J(ctx, u) > 1e-12)
      rep.u = u;
  }
  double gnorm = 0.0;
  q.gradient(ctx, rep.u, gnorm);
  rep.cerami_residual = (1.0 + ctx.norm_B(rep.u)) * gnorm;
  rep.converged = rep.cerami_residual <= cfg.cerami_tol;
  rep.seed_note = start ? "caller-provided start" : "tent-profile seed";
  fill_unconstrained_report(ctx, cfg, rep);
  return rep;
}

namespace {

struct NodalSplit {
  Vec u;           // iterate with every sign region at its own ray maximum
  int parts = 0;   // significant sign regions found
};

// Scale every connected sign region to its own ray maximum. The regions have
// disjoint supports, so their energies decouple up to the interface stencil
// entries and the result is nearly stationary in each region's amplitude at
// once. Slivers created by a gradient step flipping a few cells are dropped.
NodalSplit nodal_rescale(const ProblemContext& ctx, const Vec& v) {
  const Eigen::Index n = ctx.n();
  const SpMat& B = ctx.B_matrix();
  std::vector<int> comp(static_cast<size_t>(n), -1);
  int ncomp = 0;
  std::vector<Eigen::Index> stack;
  for (Eigen::Index i0 = 0; i0 < n; ++i0) {
    if (v[i0] == 0.0 || comp[static_cast<size_t>(i0)] >= 0) continue;
    comp[static_cast<size_t>(i0)] = ncomp;
    stack.push_back(i0);
    while (!stack.empty()) {
      const Eigen::Index i = stack.back();
      stack.pop_back();
      for (SpMat::InnerIterator it(B, i); it; ++it) {
        const Eigen::Index j = it.row();
        if (j == i || v[j] == 0.0 || comp[static_cast<size_t>(j)] >= 0) continue;
        if (v[j] * v[i] < 0.0) continue;
        comp[static_cast<size_t>(j)] = ncomp;
        stack.push_back(j);
      }
    }
    ++ncomp;
  }

  std::vector<Vec> pieces(static_cast<size_t>(ncomp), Vec::Zero(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (comp[static_cast<size_t>(i)] >= 0) pieces[static_cast<size_t>(comp[i])][i] = v[i];
  std::vector<double> pb(static_cast<size_t>(ncomp), 0.0);
  double pbmax = 0.0;
  for (int c = 0; c < ncomp; ++c) {
    pb[static_cast<size_t>(c)] = std::max(ctx.B(pieces[static_cast<size_t>(c)], pieces[static_cast<size_t>(c)]), 0.0);
    pbmax = std::max(pbmax, pb[static_cast<size_t>(c)]);
  }

  NodalSplit out{Vec::Zero(n), 0};
  for (int c = 0; c < ncomp; ++c) {
    if (pb[static_cast<size_t>(c)] <= 1e-10 * pbmax) continue;  // sliver
    double t = 1.0;
    try {
      t = ray_max(ctx, pieces[static_cast<size_t>(c)]).t_star;
    } catch (const std::runtime_error&) {
      // a region without superlinear mass keeps its raw amplitude
    }
    out.u += t * pieces[static_cast<size_t>(c)];
    ++out.parts;
  }
  return out;
}

struct NodalDescent {
  Vec u;
  int iterations = 0;
  bool converged = false;
  std::vector<IterRecord> trace;
};

// Energy descent along the full gradient with every accepted step pulled back
// so each sign region sits at its own ray maximum. Steps that change the
// number of regions are rejected, so the iterate keeps the seed's sign
// structure; the limit of this flow is nearly stationary for the full
// functional, unlike a descent constrained to a linear complement.
NodalDescent nodal_descent(const ProblemContext& ctx, const SolverConfig& cfg, const Vec& seed) {
  NodalSplit cur = nodal_rescale(ctx, seed);
  if (cur.parts == 0) throw domain_error("seed has no usable sign region");
  const int parts = cur.parts;
  NodalDescent out;
  Vec u = cur.u;
  double m_u = energy_J(ctx, u);

  for (int it = 0; it < cfg.max_iter; ++it) {
    out.iterations = it + 1;
    const Vec F = kernels::spmv(ctx.B_matrix(), u) - ctx.weighted_f(u);
    const Vec g = ctx.solve_B(F);
    const double gnorm = ctx.norm_B(g);
    const double res = (1.0 + ctx.norm_B(u)) * gnorm;
    if (res <= cfg.cerami_tol) {
      push_trace(out.trace, cfg.keep_trace, it, m_u, res, 0.0);
      out.converged = true;
      break;
    }
    if (ctx.norm_B(u) > cfg.norm_cap) break;

    const double slope = -gnorm * gnorm;
    double s = cfg.step_init;
    bool accepted = false;
    while (s > 1e-14) {
      NodalSplit trial = nodal_rescale(ctx, u - s * g);
      if (trial.parts == parts) {
        const double m_t = energy_J(ctx, trial.u);
        if (m_t <= m_u + cfg.armijo * s * slope) {
          u = std::move(trial.u);
          m_u = m_t;
          accepted = true;
          break;
        }
      }
      s *= cfg.step_shrink;
    }
    push_trace(out.trace, cfg.keep_trace, it, m_u, res, accepted ? s : 0.0);
    if (!accepted) break;  // stalled; the polish takes over from here
  }
  out.u = u;
  return out;
}

}  // namespace

std::vector<SolutionReport> multi_solve(const ProblemContext& ctx, const SolverConfig& cfg,
                                        int k) {
  require_unconstrained_gates(ctx);
  if (k < 1) throw domain_error("solution count must be at least 1");
  if (!ctx.spec().odd)
    throw hypothesis_error("odd-symmetry",
                           "multiplicity needs an odd reaction term");
  bool any_k = false;
  double gmax = 0.0;
  for (size_t i = 0; i < ctx.kmask().size(); ++i)
    if (ctx.kmask()[i]) {
      any_k = true;
      gmax = std::max(gmax, ctx.spec().gamma_at(static_cast<Eigen::Index>(i)));
    }
  if (!any_k || gmax <= 0.0)
    throw hypothesis_error("superlinear-region",
                           "multiplicity needs an active superlinear region");

  const std::vector<std::uint8_t> full(static_cast<size_t>(ctx.n()), 1);
  QSpace q(ctx, full);
  auto bnorm = [&](const Vec& v) { return ctx.norm_B(v); };

  std::vector<SolutionReport> found;
  const int budget = cfg.seed_budget_factor * k;
  for (int s = 0; s < budget && static_cast<int>(found.size()) < k; ++s) {
    Vec seed;
    try {
      seed = oscillating_seed(*ctx.ops().grid, ctx.kmask(), s + 1);
    } catch (const domain_error&) {
      continue;
    }

    SolutionReport rep;
    if (found.empty()) {
      try {
        NehariIterResult it = nehari_iteration(ctx, cfg, q, seed);
        rep.u = it.u;
        rep.iterations = it.iterations;
        rep.converged = it.converged;
        rep.trace = std::move(it.trace);
      } catch (const ray_range_error&) {
        rep.u = seed;  // seed escaped the superlinear regime; polish from it raw
      } catch (const domain_error&) {
        continue;
      }
    } else {
      // an unconstrained descent would slide back to a solution already in
      // hand; holding the seed's sign structure steers it to the least-energy
      // candidate with that structure instead
      try {
        NodalDescent d = nodal_descent(ctx, cfg, seed);
        rep.u = d.u;
        rep.iterations = d.iterations;
        rep.trace = std::move(d.trace);
      } catch (const domain_error&) {
        continue;
      }
    }

    if (!rep.converged || !is_distinct(found, rep.u, bnorm, cfg.separation_rel)) {
      SolutionReport pol = newton_polish(ctx, cfg, rep.u, found, cfg.seed ^ (0x9e37u + s));
      pol.trace.insert(pol.trace.begin(), rep.trace.begin(), rep.trace.end());
      pol.iterations += rep.iterations;
      rep = std::move(pol);
    }
    rep.cerami_residual = cerami_residual(ctx, rep.u);
    rep.converged = rep.cerami_residual <= cfg.cerami_tol;
    rep.energy = energy_J(ctx, rep.u);
    if (!rep.converged) continue;
    if (rep.energy <= 1e-12) continue;  // trivial point
    if (!is_distinct(found, rep.u, bnorm, cfg.separation_rel)) continue;
    rep.seed_note = "oscillating seed, waves=" + std::to_string(s + 1);
    fill_unconstrained_report(ctx, cfg, rep);
    found.push_back(std::move(rep));
  }

  std::sort(found.begin(), found.end(),
            [](const SolutionReport& a, const SolutionReport& b) {
              return a.energy < b.energy;
            });
  return found;
}

namespace {

SolutionReport kkt_polish(const ProblemContext& ctx, const SolverConfig& cfg, double rho,
                          const Vec& u_start, const std::vector<SolutionReport>& found,
                          std::uint64_t perturb_seed);

struct MassDescent {
  Vec u;
  int iterations = 0;
  bool converged = false;
  double drift_max = 0.0;
  std::vector<IterRecord> trace;
};

// projected descent for the mass-constrained energy; optional orth keeps the
// iterate mass-orthogonal to already-found solutions so it settles into the
// next basin before the bordered Newton finish
MassDescent normalized_descent(const ProblemContext& ctx, const SolverConfig& cfg,
                               double rho, const Vec& u0,
                               const std::vector<const Vec*>& orth) {
  const Vec& mass = ctx.ops().mass;
  auto renorm = [&](Vec v) {
    const double m2 = kernels::weighted_dot(mass, v, v);
    if (!(m2 > 0.0)) throw domain_error("iterate lost all mass");
    return Vec(std::sqrt(rho / m2) * v);
  };
  auto project = [&](Vec v) {
    for (const Vec* o : orth)
      v -= (kernels::weighted_dot(mass, v, *o) / kernels::weighted_dot(mass, *o, *o)) *
           *o;
    return v;
  };

  MassDescent out;
  Vec u = renorm(project(u0));
  double j0 = energy_J0(ctx, u);
  for (int it = 0; it < cfg.max_iter; ++it) {
    out.iterations = it + 1;
    Vec g = tangent_gradient_J0(ctx, u, rho);
    if (!orth.empty()) g = project(std::move(g));
    const double gm2 = kernels::weighted_dot(mass, g, g);
    const double res = (1.0 + ctx.norm_A0(u)) * std::sqrt(std::max(gm2, 0.0));
    push_trace(out.trace, cfg.keep_trace, it, j0, res, 0.0);
    if (res <= cfg.cerami_tol) {
      out.converged = true;
      break;
    }

    double s = cfg.step_init;
    bool accepted = false;
    while (s > 1e-14) {
      const Vec trial = renorm(project(u - s * g));
      const double j_t = energy_J0(ctx, trial);
      if (j_t <= j0 - cfg.armijo * s * gm2) {
        u = trial;
        j0 = j_t;
        accepted = true;
        break;
      }
      s *= cfg.step_shrink;
    }
    if (cfg.keep_trace && accepted) out.trace.back().step = s;
    if (!accepted) break;
    out.drift_max = std::max(out.drift_max,
                             std::abs(kernels::weighted_dot(mass, u, u) - rho) / rho);
  }
  out.u = u;
  return out;
}

}  // namespace

SolutionReport normalized_solve(const ProblemContext& ctx, const SolverConfig& cfg,
                                double rho, const Vec* start) {
  if (!(rho > 0.0)) throw domain_error("mass level must be positive");
  {
    double gmax = 0.0;
    for (size_t i = 0; i < ctx.kmask().size(); ++i)
      if (ctx.kmask()[i])
        gmax = std::max(gmax, ctx.spec().gamma_at(static_cast<Eigen::Index>(i)));
    if (gmax > 0.0) {
      const GNExponents gn = gn_exponents(ctx.spec().p, ctx.ops().grid->domain.dim);
      if (!gn.mass_subcritical)
        throw hypothesis_error("mass-subcritical",
                               "constrained minimization needs a mass-subcritical power");
    }
  }

  const Vec& mass = ctx.ops().mass;
  Vec u0;
  if (start) {
    if (start->size() != ctx.n())
      throw domain_error("start vector length does not match the context");
    u0 = *start;
  } else {
    const std::vector<std::uint8_t> full(static_cast<size_t>(ctx.n()), 1);
    u0 = oscillating_seed(*ctx.ops().grid, full, 1);
  }

  MassDescent d = normalized_descent(ctx, cfg, rho, u0, {});
  SolutionReport rep;
  rep.iterations = d.iterations;
  rep.trace = std::move(d.trace);
  Vec u = d.u;
  double drift = d.drift_max;
  if (!d.converged) {
    static const std::vector<SolutionReport> no_deflation;
    SolutionReport pol = kkt_polish(ctx, cfg, rho, u, no_deflation, cfg.seed ^ 0x6e57ed1ULL);
    rep.iterations += pol.iterations;
    const Vec g0 = tangent_gradient_J0(ctx, u, rho);
    const double res0 = (1.0 + ctx.norm_A0(u)) *
                        std::sqrt(std::max(kernels::weighted_dot(mass, g0, g0), 0.0));
    if (pol.cerami_residual <= res0) {
      u = pol.u;
      drift = std::max(drift, pol.mass_drift);
      if (cfg.keep_trace)
        rep.trace.insert(rep.trace.end(), pol.trace.begin(), pol.trace.end());
    }
  }

  rep.u = u;
  rep.energy = energy_J0(ctx, u);
  rep.multiplier = lagrange_lambda(ctx, u, rho);
  rep.mass_drift = std::max(drift,
                            std::abs(kernels::weighted_dot(mass, u, u) - rho) / rho);
  const Vec g = tangent_gradient_J0(ctx, u, rho);
  rep.cerami_residual =
      (1.0 + ctx.norm_A0(u)) * std::sqrt(std::max(kernels::weighted_dot(mass, g, g), 0.0));
  rep.nehari_residual = std::abs(derivative_along(ctx, u, u));
  rep.converged = rep.cerami_residual <= cfg.cerami_tol;
  rep.seed_note = start ? "caller-provided start" : "tent-profile seed";
  return rep;
}

namespace {

// deflated bordered Newton for the constrained stationarity system
SolutionReport kkt_polish(const ProblemContext& ctx, const SolverConfig& cfg, double rho,
                          const Vec& u_start, const std::vector<SolutionReport>& found,
                          std::uint64_t perturb_seed) {
  const Eigen::Index n = ctx.n();
  const Vec& mass = ctx.ops().mass;
  Deflation defl{&found, true};
  std::mt19937_64 rng(perturb_seed);
  std::normal_distribution<double> gauss;

  auto renorm = [&](Vec v) {
    const double m2 = kernels::weighted_dot(mass, v, v);
    return Vec(std::sqrt(rho / std::max(m2, 1e-300)) * v);
  };

  Vec u = renorm(u_start);
  double lam = lagrange_lambda(ctx, u, rho);
  const double mass_scale = 1.0 / std::sqrt(rho);

  auto residual = [&](const Vec& v, double l, Vec& out) {
    const Vec A0v = kernels::spmv(ctx.A0_matrix(), v);
    const Vec Wf = ctx.weighted_f(v);
    out.resize(n + 1);
    out.head(n) = A0v + l * mass.cwiseProduct(v) - Wf;
    out[n] = mass_scale * 0.5 * (kernels::weighted_dot(mass, v, v) - rho);
  };

  auto merit = [&](const Vec& v, double l) {
    Vec r;
    residual(v, l, r);
    return defl.factor(ctx, v) * r.norm();
  };

  SolutionReport rep;
  int perturbs = 0;
  for (int it = 0; it < cfg.newton_max; ++it) {
    rep.iterations = it + 1;
    Vec r;
    residual(u, lam, r);

    // stationarity in the projected-gradient sense, after exact renormalization
    const Vec un = renorm(u);
    const Vec g = tangent_gradient_J0(ctx, un, rho);
    const double res =
        (1.0 + ctx.norm_A0(un)) * std::sqrt(std::max(kernels::weighted_dot(mass, g, g), 0.0));
    push_trace(rep.trace, cfg.keep_trace, it, energy_J0(ctx, un), res, 0.0);
    if (res <= cfg.cerami_tol && std::abs(r[n]) <= 1e-10 * (1.0 + rho)) {
      u = un;
      lam = lagrange_lambda(ctx, u, rho);
      rep.converged = true;
      break;
    }

    std::vector<Eigen::Triplet<double>> t;
    const SpMat& A0 = ctx.A0_matrix();
    for (Eigen::Index c = 0; c < n; ++c)
      for (SpMat::InnerIterator itr(A0, c); itr; ++itr)
        t.emplace_back(itr.row(), c, itr.value());
    const Vec wdf = ctx.weighted_df(u);
    for (Eigen::Index i = 0; i < n; ++i) {
      t.emplace_back(i, i, lam * mass[i] - wdf[i]);
      const double mi = mass[i] * u[i];
      t.emplace_back(i, n, mi);
      t.emplace_back(n, i, mass_scale * mi);
    }
    SpMat Jb(n + 1, n + 1);
    Jb.setFromTriplets(t.begin(), t.end());
    Jb.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(Jb);
    if (lu.info() != Eigen::Success) break;
    const Vec y = lu.solve(r);

    double c = 1.0;
    if (!found.empty()) {
      const double gamma = defl.factor(ctx, u);
      Vec b = Vec::Zero(n + 1);
      for (const SolutionReport& fr : found)
        for (double sgn : {1.0, -1.0}) {
          const Vec d = u - sgn * fr.u;
          const double d2 = std::max(kernels::weighted_dot(mass, d, d), 1e-300);
          const double phi = 1.0 + 1.0 / d2;
          b.head(n) += (-2.0 / (d2 * d2) / phi) * mass.cwiseProduct(d);
        }
      b *= gamma;
      const double sc = b.dot(y);
      c = gamma / (gamma + sc);
      if (!std::isfinite(c) || std::abs(c) < 1e-8) c = 1e-8;
    }

    const double m_u = merit(u, lam);
    double alpha = 1.0;
    bool accepted = false;
    while (alpha > 1e-10) {
      const Vec du = y.head(n);
      const Vec trial_u = u - alpha * c * du;
      const double trial_l = lam - alpha * c * y[n];
      if (merit(trial_u, trial_l) <= (1.0 - 1e-4 * alpha) * m_u) {
        u = trial_u;
        lam = trial_l;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (++perturbs > 3) break;
      Vec eta(n);
      for (Eigen::Index i = 0; i < n; ++i) eta[i] = gauss(rng);
      u = renorm(u + 0.05 * std::sqrt(rho / kernels::weighted_dot(mass, eta, eta)) * eta);
      lam = lagrange_lambda(ctx, u, rho);
    }
  }

  u = renorm(u);
  rep.u = u;
  rep.energy = energy_J0(ctx, u);
  rep.multiplier = lagrange_lambda(ctx, u, rho);
  rep.mass_drift = std::abs(kernels::weighted_dot(mass, u, u) - rho) / rho;
  const Vec g = tangent_gradient_J0(ctx, u, rho);
  rep.cerami_residual =
      (1.0 + ctx.norm_A0(u)) * std::sqrt(std::max(kernels::weighted_dot(mass, g, g), 0.0));
  rep.converged = rep.cerami_residual <= cfg.cerami_tol;
  return rep;
}

}  // namespace

std::vector<SolutionReport> normalized_multi(const ProblemContext& ctx,
                                             const SolverConfig& cfg, double rho, int k) {
  if (k < 1) throw domain_error("solution count must be at least 1");
  if (!ctx.spec().odd)
    throw hypothesis_error("odd-symmetry", "multiplicity needs an odd reaction term");
  {
    double gmax = 0.0;
    for (size_t i = 0; i < ctx.kmask().size(); ++i)
      if (ctx.kmask()[i])
        gmax = std::max(gmax, ctx.spec().gamma_at(static_cast<Eigen::Index>(i)));
    if (gmax > 0.0) {
      const GNExponents gn = gn_exponents(ctx.spec().p, ctx.ops().grid->domain.dim);
      if (!gn.mass_subcritical)
        throw hypothesis_error("mass-subcritical",
                               "constrained minimization needs a mass-subcritical power");
    }
  }
  const Vec& mass = ctx.ops().mass;
  auto mnorm = [&](const Vec& v) {
    return std::sqrt(std::max(kernels::weighted_dot(mass, v, v), 0.0));
  };
  const Grid& grid = *ctx.ops().grid;
  const double rmax = grid.dist_origin.maxCoeff();

  std::vector<SolutionReport> found;
  const int budget = cfg.seed_budget_factor * k;
  for (int s = 0; s < budget && static_cast<int>(found.size()) < k; ++s) {
    // first k seeds: tents on disjoint radial shells (exactly M-orthogonal);
    // later seeds fall back to oscillation over the whole domain
    Vec seed;
    if (s < k) {
      std::vector<std::uint8_t> shell(static_cast<size_t>(grid.n()), 0);
      const double a = rmax * s / k, b = rmax * (s + 1) / k;
      bool any = false;
      for (Eigen::Index i = 0; i < grid.n(); ++i) {
        const double r = grid.dist_origin[i];
        if (r >= a && (r < b || s == k - 1)) {
          shell[static_cast<size_t>(i)] = 1;
          any = true;
        }
      }
      if (!any) continue;
      seed = oscillating_seed(grid, shell, 1);
    } else {
      const std::vector<std::uint8_t> full(static_cast<size_t>(grid.n()), 1);
      seed = oscillating_seed(grid, full, s - k + 2);
    }

    std::vector<const Vec*> orth;
    orth.reserve(found.size());
    for (const SolutionReport& fr : found) orth.push_back(&fr.u);
    MassDescent d;
    try {
      d = normalized_descent(ctx, cfg, rho, seed, orth);
    } catch (const domain_error&) {
      continue;  // seed vanished under the projection
    }
    // the descent settles into a basin; full constrained stationarity and
    // the push away from found solutions come from the bordered Newton
    SolutionReport rep = kkt_polish(ctx, cfg, rho, d.u, found,
                                    cfg.seed ^ (0x517eu + s));
    rep.trace.insert(rep.trace.begin(), d.trace.begin(), d.trace.end());
    rep.iterations += d.iterations;
    if (!rep.converged) continue;
    if (!is_distinct(found, rep.u, mnorm, cfg.separation_rel)) continue;
    rep.seed_note = s < k ? "radial shell seed " + std::to_string(s)
                          : "oscillating seed, waves=" + std::to_string(s - k + 2);
    found.push_back(std::move(rep));
  }

  std::sort(found.begin(), found.end(),
            [](const SolutionReport& a, const SolutionReport& b) {
              return a.energy < b.energy;
            });
  return found;
}

}  // namespace sev
