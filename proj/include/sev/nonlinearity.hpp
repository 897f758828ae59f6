#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sev/geometry.hpp"

namespace sev {

// Reaction term, split by the K-mask:
//   on K      f(x,u) = gamma(x) |u|^{p-2} u            (superlinear power)
//   off K     f(x,u) = s(x) u^3/(1+u^2) for |u| <= u0, theta(x) u beyond,
// with s(x) = theta(x) (1+u0^2)/u0^2 so the two branches meet at |u| = u0.
// gamma and theta are either a single broadcast value or a per-node table.
struct NonlinearitySpec {
  double p = 4.0;
  Vec gamma = Vec::Constant(1, 1.0);
  Vec theta = Vec::Constant(1, 0.5);
  double u0 = 1.0;
  bool odd = true;

  static NonlinearitySpec make(double p, Vec gamma, Vec theta, double u0, bool odd = true);
  // broadcast-constant convenience; defaults are the saturating slope-1/2 model
  static NonlinearitySpec constant(double p = 4.0, double gamma = 1.0, double theta = 0.5,
                                   double u0 = 1.0);
  // no reaction at all
  static NonlinearitySpec zero();

  double gamma_at(Eigen::Index node) const {
    return gamma.size() == 1 ? gamma[0] : gamma[node];
  }
  double theta_at(Eigen::Index node) const {
    return theta.size() == 1 ? theta[0] : theta[node];
  }
  // saturating-branch slope normalizer
  double slope_at(Eigen::Index node) const {
    return theta_at(node) * (1.0 + u0 * u0) / (u0 * u0);
  }
};

double eval_f(const NonlinearitySpec& s, Eigen::Index node, bool in_k, double u);
double eval_df(const NonlinearitySpec& s, Eigen::Index node, bool in_k, double u);
double eval_F(const NonlinearitySpec& s, Eigen::Index node, bool in_k, double u);

// sup |theta| over off-K nodes; 0 when the mask covers everything
double theta_sup(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask);

// Batch evaluators over a node set (parallel above the kernel grain), with the
// serial references they are tested against. `node_of` maps local rows to grid
// nodes so restricted operator sets can reuse per-node tables.
namespace batch {
namespace serial {
double integral_F(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                  const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u);
void weighted_f(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                Vec& out);
void weighted_df(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                 const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                 Vec& out);
}  // namespace serial
double integral_F(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                  const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u);
void weighted_f(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                Vec& out);
void weighted_df(const NonlinearitySpec& s, const std::vector<std::uint8_t>& kmask,
                 const std::vector<Eigen::Index>& node_of, const Vec& w, const Vec& u,
                 Vec& out);
}  // namespace batch

struct FCondition {
  std::string name;
  bool pass = false;
  double worst = 0.0;       // worst observed violation metric (meaning per condition)
  double fitted = 0.0;      // fitted constant where one exists
  Eigen::Index witness_node = -1;
  double witness_u = 0.0;
  std::string note;
};

struct FConditionReport {
  std::vector<FCondition> conditions;  // growth, small-u, superlinear, monotone, linear-tail
  bool all_pass() const;
};

struct FVerifyPlan {
  double u_min = 1e-6;
  double u_max = 1e4;
  int u_samples = 97;        // log-spaced per sign
  int node_samples = 64;     // random nodes, seeded
  std::uint64_t seed = 20240817;
};

// Sampled verification of the structural conditions on f; a spec whose p lies
// outside (2, 2N/(N-2)) is rejected outright.
FConditionReport verify_conditions(const NonlinearitySpec& s, const Grid& grid,
                                   const std::vector<std::uint8_t>& kmask,
                                   const FVerifyPlan& plan = {});

// Same checks against arbitrary evaluators (node, in_k, u) -> value, so the
// verifier itself can be exercised on reaction terms the shipped families
// cannot represent. `tail_from` is where the off-K linear tail must start.
using FieldEval = std::function<double(Eigen::Index, bool, double)>;
FConditionReport verify_conditions_fn(const FieldEval& f, const FieldEval& F, double p,
                                      const Grid& grid,
                                      const std::vector<std::uint8_t>& kmask,
                                      double tail_from, const FVerifyPlan& plan = {});

struct GNExponents {
  double delta_p = 0.0;    // N (1/2 - 1/p)
  double delta_p_p = 0.0;  // delta_p * p
  bool mass_subcritical = false;  // delta_p * p < 2, i.e. p < 2 + 4/N
};

GNExponents gn_exponents(double p, int dim);

}  // namespace sev
