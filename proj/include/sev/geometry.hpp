#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sev/kernels.hpp"

namespace sev {

// Bounded open domain containing the origin. Two variants: a ball of radius R
// about the origin in dimension N >= 3, and a 3-d axis-aligned box
// prod (a_i, b_i) with a_i < 0 < b_i.
struct DomainSpec {
  enum class Kind { ball, box };

  Kind kind = Kind::ball;
  int dim = 3;
  double radius = 1.0;                     // ball only
  std::array<double, 3> lo{-1, -1, -1};    // box only
  std::array<double, 3> hi{1, 1, 1};

  static DomainSpec ball(double radius, int dim);
  static DomainSpec box(std::array<double, 3> lo, std::array<double, 3> hi);

  double volume() const;
  bool contains(const double* x, int nx) const;  // closed containment
};

// Closed region K inside the domain where the nonlinearity is superlinear.
struct RegionK {
  enum class Kind { empty, annulus, subbox };

  Kind kind = Kind::empty;
  double r_lo = 0.0, r_hi = 0.0;        // annulus (r_lo may be 0: a closed ball)
  std::array<double, 3> lo{0, 0, 0};    // subbox
  std::array<double, 3> hi{0, 0, 0};

  static RegionK empty();
  static RegionK annulus(double r_lo, double r_hi);
  static RegionK subbox(std::array<double, 3> lo, std::array<double, 3> hi);

  bool has_interior() const;
  std::string describe() const;
};

// Cell-centered grid over the domain. Radial grids reduce the ball to one
// dimension (the measure weight carries the sphere area factor); box grids are
// tensor products. All nodes are strictly interior, so the two distance fields
// are strictly positive.
struct Grid {
  DomainSpec domain;
  int resolution = 0;                  // cells per axis (radial: total cells)
  std::array<Eigen::Index, 3> shape{}; // node counts per axis; radial {M,1,1}
  std::array<double, 3> h{};           // spacings; radial uses h[0]

  Eigen::MatrixXd coords;              // n x (1 or 3)
  Vec weight;                          // quadrature weights, sum ~ |Omega|
  Vec dist_origin;                     // |x_i|
  Vec dist_boundary;                   // dist(x_i, boundary)

  Eigen::Index n() const { return weight.size(); }
  bool radial() const { return domain.kind == DomainSpec::Kind::ball; }
};

Grid build_grid(const DomainSpec& domain, int resolution);

// Distance from an interior point to the boundary; points outside the closed
// domain are rejected.
double distance_to_boundary(const DomainSpec& domain, const double* x, int nx);

// Closed containment test per node. Empty region -> all false. A region with
// nonempty interior that captures no node is a resolution failure.
std::vector<std::uint8_t> k_mask(const Grid& grid, const RegionK& region);

struct ConditionCReport {
  bool holds = false;
  std::string reason;
};

// Superharmonicity of the boundary distance. Both supported variants are
// convex, where it holds automatically.
ConditionCReport check_condition_C(const DomainSpec& domain);

// Joint smallness of the two singular couplings:
// margin = 1/4 - mu/(dim-2)^2 - nu, condition holds iff margin > 0.
// dim < 3 or negative coefficients are rejected outright.
double check_condition_N(double mu, double nu, int dim);

}  // namespace sev
