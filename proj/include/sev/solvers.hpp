#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sev/functional.hpp"

namespace sev {

struct SolverConfig {
  int max_iter = 2000;
  double cerami_tol = 1e-7;

  // backtracking line search
  double step_init = 1.0;
  double step_shrink = 0.5;
  double armijo = 1e-4;

  int path_nodes = 31;          // mountain-pass path resolution, >= 11
  double norm_cap = 1e6;        // iterate blow-up guard
  double separation_rel = 1e-3; // distinctness threshold, relative to largest norm
  std::uint64_t seed = 20240817;

  int newton_max = 60;          // polish budget per seed
  int seed_budget_factor = 4;   // seeds tried per requested solution

  bool keep_trace = false;
};

struct IterRecord {
  int iter = 0;
  double energy = 0.0;
  double residual = 0.0;
  double step = 0.0;
};

struct LevelBracket {
  double sphere_radius = 0.0;
  double sphere_inf = 0.0;   // inf J on the sampled sphere (positive in theory)
  double q_ray_level = 0.0;  // max of J along the ray through the solution
};

struct SolutionReport {
  Vec u;
  double energy = 0.0;
  double cerami_residual = 0.0;
  double nehari_residual = 0.0;  // |J'(u)(u)|
  LevelBracket bracket;
  double multiplier = std::numeric_limits<double>::quiet_NaN();  // constrained runs
  double mass_drift = 0.0;                                       // constrained runs
  int iterations = 0;
  bool converged = false;
  std::string seed_note;
  std::vector<IterRecord> trace;
};

// Saddle search on a deformed polyline from 0 to a downhill endpoint: the
// maximal node descends with an Armijo backtracking step, then the path is
// re-parametrized to uniform arc length. Stops at the Cerami criterion.
SolutionReport mountain_pass(const ProblemContext& ctx, const SolverConfig& cfg);

// Constrained minimization over the natural constraint set inside the
// subspace of vectors supported on qmask: alternate an exact ray rescale with
// projected descent. A caller-provided start must be supported on qmask.
SolutionReport nehari_solve(const ProblemContext& ctx, const SolverConfig& cfg,
                            const std::vector<std::uint8_t>& qmask,
                            const Vec* start = nullptr);

// k distinct critical points from oscillating seeds supported on the
// superlinear region, with deflation guarding against rediscovery. Requires
// an odd reaction term. Reports come back sorted by energy; fewer than k
// entries means the seed budget ran out.
std::vector<SolutionReport> multi_solve(const ProblemContext& ctx, const SolverConfig& cfg,
                                        int k);

// Mass-constrained minimization on the sphere u' M u = rho via projected
// descent with exact renormalization; the multiplier is read off at the end.
SolutionReport normalized_solve(const ProblemContext& ctx, const SolverConfig& cfg,
                                double rho, const Vec* start = nullptr);

// k distinct constrained critical points from radially disjoint seeds plus a
// deflated bordered Newton polish when plain descent rediscovers a solution.
std::vector<SolutionReport> normalized_multi(const ProblemContext& ctx,
                                             const SolverConfig& cfg, double rho, int k);

// Oscillating seed profiles supported on the masked region: tent profile
// times a sign-changing factor with `waves` - 1 interior sign changes.
Vec oscillating_seed(const Grid& grid, const std::vector<std::uint8_t>& support_mask,
                     int waves);

}  // namespace sev
