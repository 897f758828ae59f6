#include "sev/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "sev/errors.hpp"
#include "sev/kernels.hpp"

namespace sev {

namespace {

void validate_pencil(const SpMat& A, const Vec& Mdiag, int k) {
  if (A.rows() != A.cols() || A.rows() != Mdiag.size())
    throw domain_error("pencil dimensions disagree");
  if (k < 1 || k > A.rows()) throw domain_error("eigenpair count out of range");
  if (Mdiag.minCoeff() <= 0.0) throw domain_error("mass weights must be positive");
}

Vec pencil_residuals(const SpMat& A, const Vec& Mdiag, const Vec& lam,
                     const Eigen::MatrixXd& V) {
  Vec res(lam.size());
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    const Vec v = V.col(j);
    const Vec Av = kernels::spmv(A, v);
    const Vec Mv = Mdiag.cwiseProduct(v);
    res[j] = (Av - lam[j] * Mv).norm() / Mv.norm();
  }
  return res;
}

void fix_signs(Eigen::MatrixXd& V) {
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    Eigen::Index imax = 0;
    V.col(j).cwiseAbs().maxCoeff(&imax);
    if (V(imax, j) < 0.0) V.col(j) = -V.col(j);
  }
}

SpectrumReport dense_path(const SpMat& A, const Vec& Mdiag, int k, const EigOptions& opts) {
  const Eigen::Index n = A.rows();
  const Vec dm = Mdiag.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd C = Eigen::MatrixXd(A);
  C = dm.asDiagonal() * C * dm.asDiagonal();
  C = 0.5 * (C + C.transpose());  // symmetrize round-off

  SpectrumReport rep;
  if (!opts.want_vectors) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw solver_error("dense eigensolve failed");
    rep.eigenvalues = es.eigenvalues().head(k);
    return rep;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  if (es.info() != Eigen::Success) throw solver_error("dense eigensolve failed");
  rep.eigenvalues = es.eigenvalues().head(k);
  rep.vectors.resize(n, k);
  for (int j = 0; j < k; ++j) rep.vectors.col(j) = dm.cwiseProduct(es.eigenvectors().col(j));
  fix_signs(rep.vectors);
  rep.residuals = pencil_residuals(A, Mdiag, rep.eigenvalues, rep.vectors);
  return rep;
}

// shift so that A - sigma M is safely positive definite
double gershgorin_shift(const SpMat& A, const Vec& Mdiag) {
  const Eigen::Index n = A.rows();
  Vec diag = Vec::Zero(n), offabs = Vec::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (SpMat::InnerIterator it(A, c); it; ++it) {
      if (it.row() == c) diag[c] = it.value();
      else offabs[it.row()] += std::abs(it.value());
    }
  double lb = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    lb = std::min(lb, (diag[i] - offabs[i]) / Mdiag[i]);
  return lb - 0.01 * (1.0 + std::abs(lb));
}

SpectrumReport lanczos_path(const SpMat& A, const Vec& Mdiag, int k, double tol,
                            const EigOptions& opts) {
  const Eigen::Index n = A.rows();
  const double sigma = gershgorin_shift(A, Mdiag);

  SpMat S = A;
  for (Eigen::Index i = 0; i < n; ++i) S.coeffRef(i, i) -= sigma * Mdiag[i];
  S.makeCompressed();
  Eigen::SimplicialLDLT<SpMat> ldlt(S);
  if (ldlt.info() != Eigen::Success)
    throw solver_error("shifted operator factorization failed");

  auto m_dot = [&](const Vec& a, const Vec& b) {
    return kernels::weighted_dot(Mdiag, a, b);
  };

  int m = std::min<Eigen::Index>(n, std::max(2 * k + 20, 40));
  std::string last_residuals;
  while (true) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd V(n, m);
    Vec alpha = Vec::Zero(m), beta = Vec::Zero(m);  // beta[j]: coupling j-1 <-> j

    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
    v /= std::sqrt(m_dot(v, v));
    V.col(0) = v;

    for (int j = 0; j < m; ++j) {
      Vec w = ldlt.solve(Mdiag.cwiseProduct(V.col(j)));
      alpha[j] = m_dot(w, V.col(j));
      w -= alpha[j] * V.col(j);
      if (j > 0) w -= beta[j] * V.col(j - 1);
      // full reorthogonalization, twice
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) w -= m_dot(w, V.col(i)) * V.col(i);
      if (j + 1 < m) {
        double b = std::sqrt(std::max(m_dot(w, w), 0.0));
        if (b < 1e-12) {
          // invariant subspace; continue with a fresh direction
          for (Eigen::Index i = 0; i < n; ++i) w[i] = gauss(rng);
          for (int pass = 0; pass < 2; ++pass)
            for (int i = 0; i <= j; ++i) w -= m_dot(w, V.col(i)) * V.col(i);
          b = 0.0;
          const double wn = std::sqrt(m_dot(w, w));
          if (wn < 1e-300) throw solver_error("iterative eigensolver lost its basis");
          w /= wn;
          V.col(j + 1) = w;
          beta[j + 1] = b;
          continue;
        }
        beta[j + 1] = b;
        V.col(j + 1) = w / b;
      }
    }

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      T(j, j) = alpha[j];
      if (j > 0) {
        T(j - 1, j) = beta[j];
        T(j, j - 1) = beta[j];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    if (es.info() != Eigen::Success) throw solver_error("tridiagonal eigensolve failed");

    // largest theta of the inverted operator <-> smallest lambda of the pencil
    const int avail = std::min(m, static_cast<int>(n));
    if (avail >= k) {
      SpectrumReport rep;
      rep.eigenvalues.resize(k);
      rep.vectors.resize(n, k);
      for (int j = 0; j < k; ++j) {
        const int col = m - 1 - j;
        const double theta = es.eigenvalues()[col];
        rep.eigenvalues[j] = sigma + 1.0 / theta;
        rep.vectors.col(j) = V * es.eigenvectors().col(col);
        const double nr = std::sqrt(m_dot(rep.vectors.col(j), rep.vectors.col(j)));
        rep.vectors.col(j) /= nr;
      }
      // theta taken descending gives lambda ascending; sort defensively anyway
      std::vector<int> order(k);
      for (int i = 0; i < k; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return rep.eigenvalues[a] < rep.eigenvalues[b];
      });
      Vec lam(k);
      Eigen::MatrixXd W(n, k);
      for (int i = 0; i < k; ++i) {
        lam[i] = rep.eigenvalues[order[i]];
        W.col(i) = rep.vectors.col(order[i]);
      }
      rep.eigenvalues = lam;
      rep.vectors = W;

      rep.residuals = pencil_residuals(A, Mdiag, rep.eigenvalues, rep.vectors);
      if ((rep.residuals.array() <= tol).all()) {
        fix_signs(rep.vectors);
        if (!opts.want_vectors) {
          rep.vectors.resize(0, 0);
          rep.residuals.resize(0);
        }
        return rep;
      }
      std::ostringstream os;
      os << rep.residuals.transpose();
      last_residuals = os.str();
    }

    if (m >= std::min<Eigen::Index>(n, opts.max_subspace))
      throw solver_error("iterative eigensolver did not converge; attained residuals: " +
                         last_residuals);
    m = static_cast<int>(std::min<Eigen::Index>(n, 2 * m));
  }
}

}  // namespace

SpectrumReport smallest_eigenpairs(const SpMat& A, const Vec& Mdiag, int k, double tol,
                                   const EigOptions& opts) {
  validate_pencil(A, Mdiag, k);
  if (A.rows() <= opts.dense_threshold) return dense_path(A, Mdiag, k, opts);
  return lanczos_path(A, Mdiag, k, tol, opts);
}

double hardy_constant_origin(const OperatorSet& ops) {
  EigOptions o;
  o.want_vectors = false;
  return smallest_eigenpairs(ops.L, ops.p_origin, 1, 1e-10, o).eigenvalues[0];
}

double hardy_constant_boundary(const OperatorSet& ops) {
  EigOptions o;
  o.want_vectors = false;
  return smallest_eigenpairs(ops.L, ops.p_boundary, 1, 1e-10, o).eigenvalues[0];
}

SpectrumReport spectrum_A(const OperatorSet& ops, double mu, double nu, const Vec& theta,
                          int k, double tol, const EigOptions& opts) {
  const Eigen::Index n = ops.n();
  if (theta.size() != n) throw domain_error("slope table length does not match operators");

  // center the slope table; a constant shift of theta then leaves the matrix
  // bit-identical and moves only the scalar added back below
  const double tbar = 0.5 * (theta.minCoeff() + theta.maxCoeff());
  Vec d = -mu * ops.p_origin - nu * ops.p_boundary -
          (ops.mass.array() * (theta.array() - tbar)).matrix();
  SpMat A = ops.L;
  for (Eigen::Index i = 0; i < n; ++i)
    if (d[i] != 0.0) A.coeffRef(i, i) += d[i];
  A.makeCompressed();

  SpectrumReport rep = smallest_eigenpairs(A, ops.mass, k, tol, opts);
  rep.eigenvalues.array() += -tbar;
  rep.theta_sup = theta.cwiseAbs().maxCoeff();

  if (rep.eigenvalues[0] <= -rep.theta_sup - 1e-9 * (1.0 + rep.theta_sup))
    throw theory_error("smallest eigenvalue fell at or below -sup|theta|");
  return rep;
}

double check_condition_A(double lambda, const SpectrumReport& spectrum) {
  if (spectrum.eigenvalues.size() == 0) throw domain_error("empty spectrum");
  const double target = -lambda;
  double margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < spectrum.eigenvalues.size(); ++i)
    margin = std::min(margin, std::abs(spectrum.eigenvalues[i] - target));
  const double frontier = spectrum.eigenvalues[spectrum.eigenvalues.size() - 1] - target;
  // anything beyond the computed window lies at distance >= frontier
  if (frontier < margin)
    throw inconclusive_error("spectral window too small to certify the margin; "
                             "recompute with more eigenvalues");
  return margin;
}

}  // namespace sev
