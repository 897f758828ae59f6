#include "sev/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sev/errors.hpp"

#ifdef SEV_HAVE_OPENMP
#include <omp.h>
#endif

namespace sev {

NonlinearitySpec NonlinearitySpec::make(double p, Vec gamma, Vec theta, double u0, bool odd) {
  if (!(p > 2.0)) throw config_error("power exponent must exceed 2");
  if (!(u0 > 0.0)) throw config_error("saturation threshold must be positive");
  if (gamma.size() == 0 || theta.size() == 0)
    throw config_error("coefficient tables must be nonempty");
  if ((gamma.array() < 0.0).any())
    throw config_error("superlinear coefficient gamma must be nonnegative");
  NonlinearitySpec s;
  s.p = p;
  s.gamma = std::move(gamma);
  s.theta = std::move(theta);
  s.u0 = u0;
  s.odd = odd;
  return s;
}

NonlinearitySpec NonlinearitySpec::constant(double p, double gamma, double theta, double u0) {
  return make(p, Vec::Constant(1, gamma), Vec::Constant(1, theta), u0);
}

NonlinearitySpec NonlinearitySpec::zero() {
  return make(4.0, Vec::Constant(1, 0.0), Vec::Constant(1, 0.0), 1.0);
}

double eval_f(const NonlinearitySpec& s, Eigen::Index node, bool in_k, double u) {
  if (in_k) {
    if (u == 0.0) return 0.0;
    return s.gamma_at(node) * std::pow(std::abs(u), s.p - 2.0) * u;
  }
  const double au = std::abs(u);
  if (au <= s.u0) return s.slope_at(node) * u * u * u / (1.0 + u * u);
  return s.theta_at(node) * u;
}

double eval_df(const NonlinearitySpec& s, Eigen::Index node, bool in_k, double u) {
  if (in_k) {
    if (u == 0.0) return 0.0;
    return s.gamma_at(node) * (s.p - 1.0) * std::pow(std::abs(u), s.p - 2.0);
  }
  const double au = std::abs(u);
  if (au <= s.u0) {
    const double q = 1.0 + u * u;
    return s.slope_at(node) * u * u * (3.0 + u * u) / (q * q);
  }
  return s.theta_at(node);
}

double eval_F(const NonlinearitySpec& s, Eigen::Index node, bool in_k, double u) {
  if (in_k) return s.gamma_at(node) * std::pow(std::abs(u), s.p) / s.p;
  const double au = std::abs(u);
  if (au <= s.u0)
    return s.slope_at(node) * 0.5 * (u * u - std::log1p(u * u));
  const double Fu0 = s.slope_at(node) * 0.5 * (s.u0 * s.u0 - std::log1p(s.u0 * s.u0));
  return Fu0 + 0.5 * s.theta_at(node) * (u * u - s.u0 * s.u0);
}

double theta_sup(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask) {
  double m = 0.0;
  for (size_t i = 0; i < kmask.size(); ++i)
    if (!kmask[i]) m = std::max(m, std::abs(s.theta_at(static_cast<Eigen::Index>(i))));
  return m;
}

namespace batch {

namespace serial {

double integral_F(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                  const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const Eigen::Index g = node_of[static_cast<size_t>(i)];
    acc += w[i] * eval_F(s, g, kmask[static_cast<size_t>(g)] != 0, u[i]);
  }
  return acc;
}

void weighted_f(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                Vec& out) {
  out.resize(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const Eigen::Index g = node_of[static_cast<size_t>(i)];
    out[i] = w[i] * eval_f(s, g, kmask[static_cast<size_t>(g)] != 0, u[i]);
  }
}

void weighted_df(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                 const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                 Vec& out) {
  out.resize(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const Eigen::Index g = node_of[static_cast<size_t>(i)];
    out[i] = w[i] * eval_df(s, g, kmask[static_cast<size_t>(g)] != 0, u[i]);
  }
}

}  // namespace serial

#ifdef SEV_HAVE_OPENMP

double integral_F(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                  const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u) {
  const Eigen::Index n = u.size();
  if (n < kernels::grain) return serial::integral_F(s, kmask, node_of, w, u);
  const int nt = omp_get_max_threads();
  std::vector<double> partial(static_cast<size_t>(nt), 0.0);
#pragma omp parallel
  {
    const int t = omp_get_thread_num();
    double acc = 0.0;
#pragma omp for schedule(static) nowait
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index g = node_of[static_cast<size_t>(i)];
      acc += w[i] * eval_F(s, g, kmask[static_cast<size_t>(g)] != 0, u[i]);
    }
    partial[static_cast<size_t>(t)] = acc;
  }
  double acc = 0.0;
  for (int t = 0; t < nt; ++t) acc += partial[static_cast<size_t>(t)];
  return acc;
}

void weighted_f(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                Vec& out) {
  const Eigen::Index n = u.size();
  if (n < kernels::grain) return serial::weighted_f(s, kmask, node_of, w, u, out);
  out.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index g = node_of[static_cast<size_t>(i)];
    out[i] = w[i] * eval_f(s, g, kmask[static_cast<size_t>(g)] != 0, u[i]);
  }
}

void weighted_df(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                 const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                 Vec& out) {
  const Eigen::Index n = u.size();
  if (n < kernels::grain) return serial::weighted_df(s, kmask, node_of, w, u, out);
  out.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index g = node_of[static_cast<size_t>(i)];
    out[i] = w[i] * eval_df(s, g, kmask[static_cast<size_t>(g)] != 0, u[i]);
  }
}

#else

double integral_F(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                  const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u) {
  return serial::integral_F(s, kmask, node_of, w, u);
}
void weighted_f(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                Vec& out) {
  serial::weighted_f(s, kmask, node_of, w, u, out);
}
void weighted_df(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                 const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                 Vec& out) {
  serial::weighted_df(s, kmask, node_of, w, u, out);
}

#endif

}  // namespace batch

bool FConditionReport::all_pass() const {
  return std::all_of(conditions.begin(), conditions.end(),
                     [](const FCondition& c) { return c.pass; });
}

GNExponents gn_exponents(double p, int dim) {
  if (dim < 1 || !(p > 0.0)) throw domain_error("interpolation exponent needs p > 0, dim >= 1");
  GNExponents e;
  e.delta_p = dim * (0.5 - 1.0 / p);
  e.delta_p_p = e.delta_p * p;
  e.mass_subcritical = e.delta_p_p < 2.0;
  return e;
}

namespace {

std::vector<Eigen::Index> sample_nodes(const Grid& grid,
                                       const std::vector<std::uint8_t>& kmask,
                                       int want, std::uint64_t seed) {
  const Eigen::Index n = grid.n();
  std::vector<Eigen::Index> in_k, off_k;
  for (Eigen::Index i = 0; i < n; ++i)
    (kmask[static_cast<size_t>(i)] ? in_k : off_k).push_back(i);
  std::mt19937_64 rng(seed);
  auto pick = [&](std::vector<Eigen::Index>& pool, int count) {
    std::shuffle(pool.begin(), pool.end(), rng);
    if (static_cast<int>(pool.size()) > count) pool.resize(static_cast<size_t>(count));
  };
  // keep both sides represented whenever they exist
  pick(in_k, want / 2 + 1);
  pick(off_k, want / 2 + 1);
  in_k.insert(in_k.end(), off_k.begin(), off_k.end());
  std::sort(in_k.begin(), in_k.end());
  return in_k;
}

}  // namespace

FConditionReport verify_conditions(const NonlinearitySpec& s, const Grid& grid,
                                   const std::vector<std::uint8_t>& kmask,
                                   const FVerifyPlan& plan) {
  if (s.gamma.size() != 1 && s.gamma.size() != grid.n())
    throw domain_error("gamma table length does not match the grid");
  if (s.theta.size() != 1 && s.theta.size() != grid.n())
    throw domain_error("theta table length does not match the grid");
  const FieldEval f = [&s](Eigen::Index g, bool ink, double u) {
    return eval_f(s, g, ink, u);
  };
  const FieldEval F = [&s](Eigen::Index g, bool ink, double u) {
    return eval_F(s, g, ink, u);
  };
  return verify_conditions_fn(f, F, s.p, grid, kmask, s.u0, plan);
}

FConditionReport verify_conditions_fn(const FieldEval& eval_f, const FieldEval& eval_F,
                                      double p, const Grid& grid,
                                      const std::vector<std::uint8_t>& kmask,
                                      double tail_from, const FVerifyPlan& plan) {
  if (static_cast<Eigen::Index>(kmask.size()) != grid.n())
    throw domain_error("mask length does not match the grid");
  const int N = grid.domain.dim;
  const double p_crit = 2.0 * N / (N - 2.0);
  if (!(p > 2.0 && p < p_crit))
    throw hypothesis_error("p-subcritical", "power exponent must lie in (2, 2N/(N-2))");
  const double s_p = p;

  const auto nodes = sample_nodes(grid, kmask, plan.node_samples, plan.seed);

  // symmetric log-spaced u samples
  std::vector<double> us;
  for (int j = 0; j < plan.u_samples; ++j) {
    const double t = static_cast<double>(j) / (plan.u_samples - 1);
    us.push_back(plan.u_min * std::pow(plan.u_max / plan.u_min, t));
  }

  FConditionReport rep;
  rep.conditions.resize(5);

  // growth bound: |f| / (1 + |u|^{p-1}) stays bounded; the constant is fitted
  {
    FCondition& c = rep.conditions[0];
    c.name = "growth";
    double fitted = 0.0, head = 0.0, tail = 0.0;
    for (Eigen::Index g : nodes) {
      const bool ink = kmask[static_cast<size_t>(g)] != 0;
      for (double au : us)
        for (double sgn : {1.0, -1.0}) {
          const double u = sgn * au;
          const double ratio = std::abs(eval_f(g, ink, u)) /
                               (1.0 + std::pow(au, s_p - 1.0));
          if (ratio > fitted) {
            fitted = ratio;
            c.witness_node = g;
            c.witness_u = u;
          }
          if (au >= plan.u_max / 10.0) tail = std::max(tail, ratio);
          else head = std::max(head, ratio);
        }
    }
    c.fitted = fitted;
    const double growth = head > 0.0 ? tail / head : (tail > 0.0 ? 10.0 : 1.0);
    c.worst = growth;
    c.pass = growth <= 1.5;
    c.note = "fitted bound and last-decade growth of |f|/(1+|u|^{p-1})";
  }

  // vanishing relative slope near zero: f(u)/u at |u|=u_min well below its size at |u|~1
  {
    FCondition& c = rep.conditions[1];
    c.name = "small-u";
    double at_min = 0.0, at_one = 0.0;
    for (Eigen::Index g : nodes) {
      const bool ink = kmask[static_cast<size_t>(g)] != 0;
      for (double sgn : {1.0, -1.0}) {
        const double r0 = std::abs(eval_f(g, ink, sgn * plan.u_min) / plan.u_min);
        const double r1 = std::abs(eval_f(g, ink, sgn * 1.0));
        if (r0 > at_min) {
          at_min = r0;
          c.witness_node = g;
          c.witness_u = sgn * plan.u_min;
        }
        at_one = std::max(at_one, r1);
      }
    }
    c.worst = at_min;
    c.fitted = at_one;
    c.pass = at_min <= 0.9 * at_one + 1e-12;
    c.note = "|f(u)/u| at |u|=u_min versus |u|=1";
  }

  // superlinearity on K: F(u)/u^2 grows without bound along |u| -> inf
  {
    FCondition& c = rep.conditions[2];
    c.name = "superlinear-on-K";
    bool any_k = false;
    bool ok = true;
    double worst_growth = std::numeric_limits<double>::infinity();
    for (Eigen::Index g : nodes) {
      if (!kmask[static_cast<size_t>(g)]) continue;
      any_k = true;
      for (double sgn : {1.0, -1.0}) {
        const double q_mid = eval_F(g, true, sgn * plan.u_max / 10.0) /
                             std::pow(plan.u_max / 10.0, 2);
        const double q_top = eval_F(g, true, sgn * plan.u_max) / std::pow(plan.u_max, 2);
        const double growth = q_mid > 0.0 ? q_top / q_mid : 0.0;
        if (growth < worst_growth) {
          worst_growth = growth;
          c.witness_node = g;
          c.witness_u = sgn * plan.u_max;
        }
        if (growth < 1.05) ok = false;
      }
    }
    if (!any_k) {
      c.pass = true;
      c.worst = 0.0;
      c.note = "no superlinear region present; vacuous";
    } else {
      c.pass = ok;
      c.worst = std::isfinite(worst_growth) ? worst_growth : 0.0;
      c.note = "decade growth factor of F(u)/u^2 at large |u| on K";
    }
  }

  // monotone relative slope: f(u)/|u| nondecreasing along each half-line
  {
    FCondition& c = rep.conditions[3];
    c.name = "monotone-slope";
    double worst = 0.0;
    bool ok = true;
    for (Eigen::Index g : nodes) {
      const bool ink = kmask[static_cast<size_t>(g)] != 0;
      for (double sgn : {1.0, -1.0}) {
        double prev = eval_f(g, ink, sgn * us[0]) / us[0] * (sgn > 0 ? 1.0 : -1.0);
        for (size_t j = 1; j < us.size(); ++j) {
          const double cur = eval_f(g, ink, sgn * us[j]) / us[j] * (sgn > 0 ? 1.0 : -1.0);
          const double drop = prev - cur;
          if (drop > worst) {
            worst = drop;
            c.witness_node = g;
            c.witness_u = sgn * us[j];
          }
          if (drop > 1e-10 * (1.0 + std::abs(prev))) ok = false;
          prev = cur;
        }
      }
    }
    c.worst = worst;
    c.pass = ok;
    c.note = "largest decrease of f(u)/|u| along increasing |u|";
  }

  // linear tail off K: beyond the threshold f must agree with the straight
  // line through its value at the largest sample
  {
    FCondition& c = rep.conditions[4];
    c.name = "linear-tail-off-K";
    double worst = 0.0;
    bool any_off = false;
    for (Eigen::Index g : nodes) {
      if (kmask[static_cast<size_t>(g)]) continue;
      any_off = true;
      for (double sgn : {1.0, -1.0}) {
        const double th = eval_f(g, false, sgn * plan.u_max) / (sgn * plan.u_max);
        for (double au : us) {
          if (au <= tail_from) continue;
          const double u = sgn * au;
          const double dev =
              std::abs(eval_f(g, false, u) - th * u) / (1.0 + std::abs(th) * au);
          if (dev > worst) {
            worst = dev;
            c.witness_node = g;
            c.witness_u = u;
          }
        }
      }
    }
    c.worst = worst;
    c.pass = worst <= 1e-10;
    c.note = any_off ? "relative deviation from the fitted linear tail beyond the threshold"
                     : "no off-K nodes; vacuous";
  }

  return rep;
}

}  // namespace sev
