#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sev {

// Error taxonomy, mirrored by the CLI exit codes:
//   config/domain misuse -> 2, failed problem hypotheses -> 3,
//   solver non-convergence -> 4, violated discrete theory (a bug) -> 5.

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// region with nonempty interior captured no grid nodes
struct resolution_error : config_error {
  using config_error::config_error;
};

// restriction would remove every node
struct empty_problem_error : domain_error {
  using domain_error::domain_error;
};

// a structural hypothesis on the problem data failed; `clause` names which one
struct hypothesis_error : std::runtime_error {
  std::string clause;
  hypothesis_error(std::string clause_, const std::string& what_)
      : std::runtime_error(what_), clause(std::move(clause_)) {}
};

// quadratic form came out nonpositive, or its factorization broke down
struct coercivity_error : hypothesis_error {
  explicit coercivity_error(const std::string& what_)
      : hypothesis_error("coercivity", what_) {}
};

// ray scan found no interior maximum (no superlinear escape along the ray)
struct ray_range_error : hypothesis_error {
  explicit ray_range_error(const std::string& what_)
      : hypothesis_error("superlinear-ray", what_) {}
};

// iterative eigensolver ran out of budget; message carries attained residuals
struct solver_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// spectral window too small to certify or refute a margin
struct inconclusive_error : solver_error {
  using solver_error::solver_error;
};

// a discretely-provable statement failed; indicates an implementation bug
struct theory_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sev
