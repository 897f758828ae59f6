#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sev/geometry.hpp"
#include "sev/kernels.hpp"

namespace sev {

// Finite-volume operators on a grid. L is the stiffness matrix of the
// Dirichlet Laplacian (flux form, half-cell closure at the boundary), the rest
// are diagonal and stored as vectors:
//   mass        w_i
//   p_origin    w_i / |x_i|^2
//   p_boundary  w_i / d(x_i)^2
// `nodes` maps matrix rows back to grid nodes; it is the identity until a
// restriction is applied.
struct OperatorSet {
  std::shared_ptr<const Grid> grid;
  SpMat L;
  Vec mass;
  Vec p_origin;
  Vec p_boundary;
  std::vector<Eigen::Index> nodes;
  bool restricted = false;

  Eigen::Index n() const { return mass.size(); }
};

OperatorSet assemble(std::shared_ptr<const Grid> grid);

// Quadratic-form value  u' (L + lambda M - mu P_o - nu P_b) v.
double bilinear_B(const OperatorSet& ops, double lambda, double mu, double nu,
                  const Vec& u, const Vec& v);

// sqrt(B(u,u)); a negative form value beyond round-off slack means the
// coefficients left the coercive regime.
double norm_B(const OperatorSet& ops, double lambda, double mu, double nu, const Vec& u);

// Explicit sparse  L + lambda M - mu P_o - nu P_b.
SpMat build_B_matrix(const OperatorSet& ops, double lambda, double mu, double nu);

// Drop the rows/columns of masked nodes (Dirichlet condition on the interface
// is inherited from the stencil). Empty mask: operators returned unchanged.
// Removing every node is refused.
OperatorSet restrict_to_complement(const OperatorSet& ops,
                                   const std::vector<std::uint8_t>& mask);

}  // namespace sev
