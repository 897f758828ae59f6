#pragma once

#include <cstdint>
#include <optional>

#include "sev/assembly.hpp"

namespace sev {

struct SpectrumReport {
  Vec eigenvalues;            // ascending
  Eigen::MatrixXd vectors;    // columns, M-normalized; empty if not requested
  Vec residuals;              // ||A v - lambda M v|| / ||M v||, empty without vectors
  double theta_sup = 0.0;
  double condition_A_margin = std::numeric_limits<double>::quiet_NaN();
};

struct EigOptions {
  int dense_threshold = 2000;   // at or below: dense transform path
  bool want_vectors = true;
  std::uint64_t seed = 7;       // iterative start vector
  int max_subspace = 400;       // iterative subspace cap before giving up
};

// k smallest eigenpairs of  A v = lambda M v  with diagonal positive M.
// Dense symmetric solve for small n; above the threshold a shift-invert
// Lanczos with full reorthogonalization, deterministic for a fixed seed.
SpectrumReport smallest_eigenpairs(const SpMat& A, const Vec& Mdiag, int k, double tol,
                                   const EigOptions& opts = {});

// Smallest generalized eigenvalue of the Dirichlet stiffness against the
// origin (resp. boundary) singular weight. Decreases with refinement toward
// the continuum constant: (dim-2)^2/4 at the origin, 1/4 at the boundary.
double hardy_constant_origin(const OperatorSet& ops);
double hardy_constant_boundary(const OperatorSet& ops);

// Spectrum of  L - mu P_o - nu P_b - diag(mass .* theta)  against the mass,
// on an operator set restricted to the complement of K. theta is given per
// restricted row. The slope table is centered before assembly so that adding
// a constant to theta shifts the reported eigenvalues exactly.
// A smallest eigenvalue at or below -sup|theta| contradicts the discrete
// spectral bound and is reported as a theory failure.
SpectrumReport spectrum_A(const OperatorSet& ops, double mu, double nu, const Vec& theta,
                          int k, double tol = 1e-8, const EigOptions& opts = {});

// Distance from -lambda to the computed spectrum. Throws when the computed
// window cannot certify the margin (nearest uncomputed eigenvalue might be
// closer); the caller should retry with larger k.
double check_condition_A(double lambda, const SpectrumReport& spectrum);

// margin > tol is the resonance clearance test
inline double condition_A_tol(double lambda) { return 1e-3 * (1.0 + std::abs(lambda)); }

// sufficient condition, no spectrum needed
inline bool condition_A_sufficient(double lambda, double theta_sup) {
  return lambda >= theta_sup;
}

}  // namespace sev
