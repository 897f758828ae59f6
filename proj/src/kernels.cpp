#include "sev/kernels.hpp"

#include <cassert>
#include <vector>

#ifdef SEV_HAVE_OPENMP
#include <omp.h>
#endif

namespace sev::kernels {

namespace serial {

void spmv(const SpMat& A, const double* x, double* y) {
  assert(A.isCompressed());
  const Eigen::Index n = A.rows();
  const int* outer = A.outerIndexPtr();
  const int* inner = A.innerIndexPtr();
  const double* vals = A.valuePtr();
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = outer[i]; k < outer[i + 1]; ++k) s += vals[k] * x[inner[k]];
    y[i] = s;
  }
}

double dot(Eigen::Index n, const double* x, const double* y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += w[i] * x[i] * y[i];
  return s;
}

void axpy(Eigen::Index n, double a, const double* x, double* y) {
  for (Eigen::Index i = 0; i < n; ++i) y[i] += a * x[i];
}

void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y) {
  for (Eigen::Index i = 0; i < n; ++i) y[i] += a * d[i] * x[i];
}

}  // namespace serial

namespace par {

#ifdef SEV_HAVE_OPENMP

void spmv(const SpMat& A, const double* x, double* y) {
  assert(A.isCompressed());
  const Eigen::Index n = A.rows();
  const int* outer = A.outerIndexPtr();
  const int* inner = A.innerIndexPtr();
  const double* vals = A.valuePtr();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = outer[i]; k < outer[i + 1]; ++k) s += vals[k] * x[inner[k]];
    y[i] = s;
  }
}

// reduction pattern: per-thread partials over a static partition, combined in
// thread order afterwards; deterministic for a fixed thread count
template <class Body>
static double ordered_reduce(Eigen::Index n, Body body) {
  const int nt = omp_get_max_threads();
  std::vector<double> partial(static_cast<size_t>(nt), 0.0);
#pragma omp parallel
  {
    const int t = omp_get_thread_num();
    double s = 0.0;
#pragma omp for schedule(static) nowait
    for (Eigen::Index i = 0; i < n; ++i) s += body(i);
    partial[static_cast<size_t>(t)] = s;
  }
  double s = 0.0;
  for (int t = 0; t < nt; ++t) s += partial[static_cast<size_t>(t)];
  return s;
}

double dot(Eigen::Index n, const double* x, const double* y) {
  return ordered_reduce(n, [&](Eigen::Index i) { return x[i] * y[i]; });
}

double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y) {
  return ordered_reduce(n, [&](Eigen::Index i) { return w[i] * x[i] * y[i]; });
}

void axpy(Eigen::Index n, double a, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) y[i] += a * x[i];
}

void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) y[i] += a * d[i] * x[i];
}

#else

void spmv(const SpMat& A, const double* x, double* y) { serial::spmv(A, x, y); }
double dot(Eigen::Index n, const double* x, const double* y) { return serial::dot(n, x, y); }
double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y) {
  return serial::weighted_dot(n, w, x, y);
}
void axpy(Eigen::Index n, double a, const double* x, double* y) { serial::axpy(n, a, x, y); }
void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y) {
  serial::diag_axpy(n, a, d, x, y);
}

#endif

}  // namespace par

void spmv(const SpMat& A, const double* x, double* y) {
  if (A.rows() >= grain) par::spmv(A, x, y);
  else serial::spmv(A, x, y);
}

double dot(Eigen::Index n, const double* x, const double* y) {
  return n >= grain ? par::dot(n, x, y) : serial::dot(n, x, y);
}

double weighted_dot(Eigen::Index n, const double* w, const double* x, const double* y) {
  return n >= grain ? par::weighted_dot(n, w, x, y) : serial::weighted_dot(n, w, x, y);
}

void axpy(Eigen::Index n, double a, const double* x, double* y) {
  if (n >= grain) par::axpy(n, a, x, y);
  else serial::axpy(n, a, x, y);
}

void diag_axpy(Eigen::Index n, double a, const double* d, const double* x, double* y) {
  if (n >= grain) par::diag_axpy(n, a, d, x, y);
  else serial::diag_axpy(n, a, d, x, y);
}

Vec spmv(const SpMat& A, const Vec& x) {
  Vec y(A.rows());
  spmv(A, x.data(), y.data());
  return y;
}

double dot(const Vec& x, const Vec& y) { return dot(x.size(), x.data(), y.data()); }

double weighted_dot(const Vec& w, const Vec& x, const Vec& y) {
  return weighted_dot(w.size(), w.data(), x.data(), y.data());
}

}  // namespace sev::kernels
