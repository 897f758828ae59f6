#include "sev/assembly.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "sev/errors.hpp"

namespace sev {

static void add_sym(std::vector<Eigen::Triplet<double>>& t, Eigen::Index i, Eigen::Index j,
                    double a) {
  t.emplace_back(i, i, a);
  t.emplace_back(j, j, a);
  t.emplace_back(i, j, -a);
  t.emplace_back(j, i, -a);
}

// One-dimensional flux form: interior face between cells j-1 and j carries
// conductance area(face)/h; the boundary face closes with a half cell, h/2.
// The face at r = 0 has zero area, which is exactly the natural condition.
static SpMat radial_stiffness(const Grid& g) {
  const int M = g.resolution;
  const int N = g.domain.dim;
  const double h = g.h[0];
  const double area = 2.0 * std::pow(std::numbers::pi, N / 2.0) / std::tgamma(N / 2.0);

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(4 * M));
  for (int j = 1; j < M; ++j) {
    const double f = j * h;
    add_sym(t, j - 1, j, area * std::pow(f, N - 1) / h);
  }
  t.emplace_back(M - 1, M - 1, area * std::pow(g.domain.radius, N - 1) / (h / 2.0));
  SpMat L(M, M);
  L.setFromTriplets(t.begin(), t.end());
  L.makeCompressed();
  return L;
}

static SpMat box_stiffness(const Grid& g) {
  const Eigen::Index m = g.shape[0];
  const Eigen::Index n = g.n();
  auto flat = [&](Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    return (i * m + j) * m + k;
  };

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(14 * n));
  const double cellw = g.h[0] * g.h[1] * g.h[2];
  for (int a = 0; a < 3; ++a) {
    const double cond = cellw / (g.h[a] * g.h[a]);  // face area / spacing
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < m; ++k) {
          std::array<Eigen::Index, 3> c{i, j, k};
          const Eigen::Index row = flat(i, j, k);
          if (c[a] + 1 < m) {
            auto cn = c;
            ++cn[a];
            add_sym(t, row, flat(cn[0], cn[1], cn[2]), cond);
          } else {
            t.emplace_back(row, row, 2.0 * cond);  // boundary face, half cell
          }
          if (c[a] == 0) t.emplace_back(row, row, 2.0 * cond);
        }
  }
  SpMat L(n, n);
  L.setFromTriplets(t.begin(), t.end());
  L.makeCompressed();
  return L;
}

OperatorSet assemble(std::shared_ptr<const Grid> grid) {
  if (!grid) throw domain_error("assemble needs a grid");
  OperatorSet ops;
  ops.grid = grid;
  ops.L = grid->radial() ? radial_stiffness(*grid) : box_stiffness(*grid);
  ops.mass = grid->weight;
  ops.p_origin = grid->weight.array() / grid->dist_origin.array().square();
  ops.p_boundary = grid->weight.array() / grid->dist_boundary.array().square();
  ops.nodes.resize(static_cast<size_t>(grid->n()));
  std::iota(ops.nodes.begin(), ops.nodes.end(), Eigen::Index{0});
  return ops;
}

double bilinear_B(const OperatorSet& ops, double lambda, double mu, double nu,
                  const Vec& u, const Vec& v) {
  if (u.size() != ops.n() || v.size() != ops.n())
    throw domain_error("vector length does not match the operator set");
  const Vec Lu = kernels::spmv(ops.L, u);
  double s = kernels::dot(Lu, v);
  if (lambda != 0.0) s += lambda * kernels::weighted_dot(ops.mass, u, v);
  if (mu != 0.0) s -= mu * kernels::weighted_dot(ops.p_origin, u, v);
  if (nu != 0.0) s -= nu * kernels::weighted_dot(ops.p_boundary, u, v);
  return s;
}

double norm_B(const OperatorSet& ops, double lambda, double mu, double nu, const Vec& u) {
  double q = bilinear_B(ops, lambda, mu, nu, u, u);
  if (q < 0.0) {
    const double scale = kernels::weighted_dot(ops.mass, u, u) + u.squaredNorm();
    if (q > -1e-12 * (1.0 + scale)) q = 0.0;  // round-off at the kernel of the form
    else
      throw coercivity_error("quadratic form is negative; coefficients violate coercivity");
  }
  return std::sqrt(q);
}

SpMat build_B_matrix(const OperatorSet& ops, double lambda, double mu, double nu) {
  const Eigen::Index n = ops.n();
  Vec d = lambda * ops.mass - mu * ops.p_origin - nu * ops.p_boundary;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (d[i] != 0.0) t.emplace_back(i, i, d[i]);
  SpMat D(n, n);
  D.setFromTriplets(t.begin(), t.end());
  SpMat B = ops.L + D;
  B.makeCompressed();
  return B;
}

OperatorSet restrict_to_complement(const OperatorSet& ops,
                                   const std::vector<std::uint8_t>& mask) {
  const Eigen::Index n = ops.n();
  if (static_cast<Eigen::Index>(mask.size()) != n)
    throw domain_error("mask length does not match the operator set");

  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<size_t>(n));
  std::vector<Eigen::Index> newidx(static_cast<size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!mask[static_cast<size_t>(i)]) {
      newidx[static_cast<size_t>(i)] = static_cast<Eigen::Index>(keep.size());
      keep.push_back(i);
    }
  if (keep.empty()) throw empty_problem_error("restriction removes every node");
  if (static_cast<Eigen::Index>(keep.size()) == n) return ops;

  OperatorSet out;
  out.grid = ops.grid;
  out.restricted = true;
  const Eigen::Index nk = static_cast<Eigen::Index>(keep.size());
  out.mass.resize(nk);
  out.p_origin.resize(nk);
  out.p_boundary.resize(nk);
  out.nodes.resize(static_cast<size_t>(nk));
  for (Eigen::Index r = 0; r < nk; ++r) {
    const Eigen::Index i = keep[static_cast<size_t>(r)];
    out.mass[r] = ops.mass[i];
    out.p_origin[r] = ops.p_origin[i];
    out.p_boundary[r] = ops.p_boundary[i];
    out.nodes[static_cast<size_t>(r)] = ops.nodes[static_cast<size_t>(i)];
  }

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(ops.L.nonZeros()));
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index nc = newidx[static_cast<size_t>(c)];
    if (nc < 0) continue;
    for (SpMat::InnerIterator it(ops.L, c); it; ++it) {
      const Eigen::Index nr = newidx[static_cast<size_t>(it.row())];
      if (nr >= 0) t.emplace_back(nr, nc, it.value());
    }
  }
  out.L.resize(nk, nk);
  out.L.setFromTriplets(t.begin(), t.end());
  out.L.makeCompressed();
  return out;
}

}  // namespace sev
