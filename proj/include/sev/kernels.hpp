#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace sev {

// Column-major with double scalars everywhere. Every operator in this code is
// symmetric, so the CSC arrays of a SparseMatrix double as a CSR view and the
// row-parallel matvec can run on them directly.
using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

namespace kernels {

// below this length the dispatching entry points stay serial
inline constexpr Eigen::Index grain = 4096;

// Serial reference implementations. These are the ground truth the parallel
// versions are tested against; keep them dumb.
namespace serial {
void spmv(const SpMat& A, const double* x, double* y);
double dot(Eigen::Index n, const double* x, const double* y);
double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y);
void axpy(Eigen::Index n, double a, const double* x, double* y);
void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y);
}  // namespace serial

// Parallel implementations. Reductions accumulate per-thread partials and
// combine them in thread order, so results are reproducible for a fixed
// OMP_NUM_THREADS. Without OpenMP these forward to serial.
namespace par {
void spmv(const SpMat& A, const double* x, double* y);
double dot(Eigen::Index n, const double* x, const double* y);
double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y);
void axpy(Eigen::Index n, double a, const double* x, double* y);
void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y);
}  // namespace par

// Dispatching entry points: parallel at or above the grain size.
void spmv(const SpMat& A, const double* x, double* y);
double dot(Eigen::Index n, const double* x, const double* y);
double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y);
void axpy(Eigen::Index n, double a, const double* x, double* y);
void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y);

Vec spmv(const SpMat& A, const Vec& x);
double dot(const Vec& x, const Vec& y);
double weighted_dot(const Vec& w, const Vec& x, const Vec& y);

}  // namespace kernels
}  // namespace sev
