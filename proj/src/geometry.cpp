#include "sev/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sev/errors.hpp"

namespace sev {

DomainSpec DomainSpec::ball(double radius, int dim) {
  if (!(radius > 0.0)) throw config_error("ball radius must be positive");
  if (dim < 3) throw config_error("ball dimension must be at least 3");
  DomainSpec d;
  d.kind = Kind::ball;
  d.dim = dim;
  d.radius = radius;
  return d;
}

DomainSpec DomainSpec::box(std::array<double, 3> lo, std::array<double, 3> hi) {
  DomainSpec d;
  d.kind = Kind::box;
  d.dim = 3;
  d.lo = lo;
  d.hi = hi;
  for (int a = 0; a < 3; ++a) {
    if (!(lo[a] < 0.0 && 0.0 < hi[a]))
      throw config_error("box must satisfy lo < 0 < hi on every axis");
  }
  return d;
}

static double sphere_area(int dim) {
  // |S^{N-1}| = 2 pi^{N/2} / Gamma(N/2)
  return 2.0 * std::pow(std::numbers::pi, dim / 2.0) / std::tgamma(dim / 2.0);
}

double DomainSpec::volume() const {
  if (kind == Kind::ball) return sphere_area(dim) * std::pow(radius, dim) / dim;
  double v = 1.0;
  for (int a = 0; a < 3; ++a) v *= hi[a] - lo[a];
  return v;
}

bool DomainSpec::contains(const double* x, int nx) const {
  if (kind == Kind::ball) {
    double r2 = 0.0;
    for (int a = 0; a < nx; ++a) r2 += x[a] * x[a];
    return std::sqrt(r2) <= radius;
  }
  if (nx != 3) return false;
  for (int a = 0; a < 3; ++a)
    if (x[a] < lo[a] || x[a] > hi[a]) return false;
  return true;
}

double distance_to_boundary(const DomainSpec& domain, const double* x, int nx) {
  if (!domain.contains(x, nx)) throw domain_error("point lies outside the domain");
  if (domain.kind == DomainSpec::Kind::ball) {
    double r2 = 0.0;
    for (int a = 0; a < nx; ++a) r2 += x[a] * x[a];
    return domain.radius - std::sqrt(r2);
  }
  double d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) d = std::min({d, x[a] - domain.lo[a], domain.hi[a] - x[a]});
  return d;
}

RegionK RegionK::empty() { return RegionK{}; }

RegionK RegionK::annulus(double r_lo, double r_hi) {
  if (r_lo < 0.0 || r_hi < r_lo) throw config_error("annulus needs 0 <= r_lo <= r_hi");
  RegionK k;
  k.kind = Kind::annulus;
  k.r_lo = r_lo;
  k.r_hi = r_hi;
  return k;
}

RegionK RegionK::subbox(std::array<double, 3> lo, std::array<double, 3> hi) {
  for (int a = 0; a < 3; ++a)
    if (hi[a] < lo[a]) throw config_error("subbox needs lo <= hi on every axis");
  RegionK k;
  k.kind = Kind::subbox;
  k.lo = lo;
  k.hi = hi;
  return k;
}

bool RegionK::has_interior() const {
  switch (kind) {
    case Kind::empty: return false;
    case Kind::annulus: return r_hi > r_lo;
    case Kind::subbox:
      for (int a = 0; a < 3; ++a)
        if (!(hi[a] > lo[a])) return false;
      return true;
  }
  return false;
}

std::string RegionK::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::empty: os << "empty region"; break;
    case Kind::annulus: os << "annulus [" << r_lo << ", " << r_hi << "]"; break;
    case Kind::subbox:
      os << "subbox [" << lo[0] << "," << hi[0] << "]x[" << lo[1] << "," << hi[1] << "]x["
         << lo[2] << "," << hi[2] << "]";
      break;
  }
  return os.str();
}

static Grid build_radial(const DomainSpec& domain, int M) {
  Grid g;
  g.domain = domain;
  g.resolution = M;
  g.shape = {M, 1, 1};
  const double R = domain.radius;
  const double h = R / M;
  g.h = {h, 0.0, 0.0};

  g.coords.resize(M, 1);
  g.weight.resize(M);
  g.dist_origin.resize(M);
  g.dist_boundary.resize(M);
  const double area = sphere_area(domain.dim);
  for (int i = 0; i < M; ++i) {
    const double r = (i + 0.5) * h;
    g.coords(i, 0) = r;
    g.weight[i] = area * std::pow(r, domain.dim - 1) * h;
    g.dist_origin[i] = r;
    g.dist_boundary[i] = R - r;
  }
  return g;
}

static Grid build_box(const DomainSpec& domain, int M) {
  Grid g;
  g.domain = domain;
  g.resolution = M;
  g.shape = {M, M, M};
  for (int a = 0; a < 3; ++a) g.h[a] = (domain.hi[a] - domain.lo[a]) / M;

  const Eigen::Index n = static_cast<Eigen::Index>(M) * M * M;
  g.coords.resize(n, 3);
  g.weight.resize(n);
  g.dist_origin.resize(n);
  g.dist_boundary.resize(n);
  const double cellw = g.h[0] * g.h[1] * g.h[2];
  Eigen::Index idx = 0;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j)
      for (int k = 0; k < M; ++k, ++idx) {
        const std::array<int, 3> c{i, j, k};
        double x[3];
        for (int a = 0; a < 3; ++a) x[a] = domain.lo[a] + (c[a] + 0.5) * g.h[a];
        g.coords(idx, 0) = x[0];
        g.coords(idx, 1) = x[1];
        g.coords(idx, 2) = x[2];
        g.weight[idx] = cellw;
        g.dist_origin[idx] = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        g.dist_boundary[idx] = distance_to_boundary(domain, x, 3);
      }
  return g;
}

Grid build_grid(const DomainSpec& domain, int resolution) {
  if (resolution < 8) throw config_error("grid resolution must be at least 8");
  Grid g = domain.kind == DomainSpec::Kind::ball ? build_radial(domain, resolution)
                                                 : build_box(domain, resolution);
  // every node carries positive measure and positive distances by construction
  if (g.weight.minCoeff() <= 0.0 || g.dist_origin.minCoeff() <= 0.0 ||
      g.dist_boundary.minCoeff() <= 0.0)
    throw theory_error("grid produced a nonpositive weight or distance");
  return g;
}

static void check_region_inside(const Grid& grid, const RegionK& region) {
  const DomainSpec& d = grid.domain;
  if (region.kind == RegionK::Kind::annulus) {
    if (d.kind == DomainSpec::Kind::ball) {
      if (region.r_hi > d.radius) throw domain_error("region reaches outside the domain");
    } else {
      double inradius = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) inradius = std::min({inradius, -d.lo[a], d.hi[a]});
      if (region.r_hi > inradius) throw domain_error("region reaches outside the domain");
    }
  } else if (region.kind == RegionK::Kind::subbox) {
    if (d.kind == DomainSpec::Kind::ball) {
      double far2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double m = std::max(std::abs(region.lo[a]), std::abs(region.hi[a]));
        far2 += m * m;
      }
      if (std::sqrt(far2) > d.radius) throw domain_error("region reaches outside the domain");
    } else {
      for (int a = 0; a < 3; ++a)
        if (region.lo[a] < d.lo[a] || region.hi[a] > d.hi[a])
          throw domain_error("region reaches outside the domain");
    }
  }
}

std::vector<std::uint8_t> k_mask(const Grid& grid, const RegionK& region) {
  check_region_inside(grid, region);
  const Eigen::Index n = grid.n();
  std::vector<std::uint8_t> mask(static_cast<size_t>(n), 0);
  if (region.kind == RegionK::Kind::empty) return mask;

  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool in = false;
    if (region.kind == RegionK::Kind::annulus) {
      const double r = grid.dist_origin[i];
      in = r >= region.r_lo && r <= region.r_hi;
    } else {
      in = true;
      for (int a = 0; a < 3; ++a) {
        const double x = grid.coords(i, a);
        if (x < region.lo[a] || x > region.hi[a]) {
          in = false;
          break;
        }
      }
    }
    if (in) {
      mask[static_cast<size_t>(i)] = 1;
      ++count;
    }
  }
  if (count == 0 && region.has_interior())
    throw resolution_error("region " + region.describe() +
                           " captured no grid node; refine the grid");
  return mask;
}

ConditionCReport check_condition_C(const DomainSpec& domain) {
  ConditionCReport rep;
  rep.holds = true;
  rep.reason = domain.kind == DomainSpec::Kind::ball
                   ? "ball is convex; the boundary distance of a convex domain is concave, "
                     "hence superharmonic"
                   : "box is convex; the boundary distance of a convex domain is concave, "
                     "hence superharmonic";
  return rep;
}

double check_condition_N(double mu, double nu, int dim) {
  if (dim < 3) throw hypothesis_error("N", "dimension must be at least 3");
  if (mu < 0.0) throw hypothesis_error("N", "origin coupling mu must be nonnegative");
  if (nu < 0.0) throw hypothesis_error("N", "boundary coupling nu must be nonnegative");
  const double d = static_cast<double>(dim - 2);
  return 0.25 - mu / (d * d) - nu;
}

}  // namespace sev
