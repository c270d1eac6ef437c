#ifndef SCALESTEER_FILTERBANK_HPP
#define SCALESTEER_FILTERBANK_HPP

#include <complex>
#include <vector>

#include "scalesteer/grid.hpp"

namespace scalesteer {

// Hyperparameters of the log-radial harmonic family
//
//   S^{kj}(r, phi) = (1/r^m) * (K(phi, phi_j) + K(phi, phi_j + pi)) * exp(i (k log r + beta))
//   K(phi, phi_j)  = exp(-d(phi, phi_j)^2 / (2 sigma_phi^2))
//
// with d the shortest angular distance. One filter per (order, orientation)
// pair; the default family has 3 orders x 8 orientations = 24 filters.
struct BasisSpec {
  std::vector<double> orders;        // k, each > 0
  std::vector<double> orientations;  // phi_j in [0, 2pi), pairwise distinct
  double sigma_phi = 0.0;            // angular Gaussian spread, > 0
  double beta = 0.0;                 // phase offset
  double m = 1.0;                    // radial decay exponent

  static BasisSpec defaults();

  int order_count() const { return static_cast<int>(orders.size()); }
  int orientation_count() const { return static_cast<int>(orientations.size()); }
  int filter_count() const { return order_count() * orientation_count(); }

  // throws std::invalid_argument on violated invariants
  void validate() const;

  bool operator==(const BasisSpec& o) const;
};

// Shortest angular distance between two angles, in [0, pi].
double angular_distance(double phi, double phi_j);

// Scalar evaluation of one basis filter at polar coordinates (r, phi).
// r == 0 returns 1 + 0i (the grid-center rule).
std::complex<double> eval_basis(const BasisSpec& spec, int order_index,
                                int orientation_index, double r, double phi);

// One filter sampled on a size x size pixel grid. Pixel (row, col) maps to
// offsets x = col - (size-1)/2, y = (size-1)/2 - row; r = hypot(x,y)/radial_scale.
// Values are point symmetric by construction (the angular term is pi-periodic
// and the phase depends on r only), so opposite pixels are sampled once and
// mirrored, making the symmetry exact rather than within rounding.
ComplexGrid sample_basis_filter(const BasisSpec& spec, int order_index,
                                int orientation_index, int size,
                                double radial_scale = 1.0);

// The full sampled stack, order-major / orientation-minor.
struct SampledBasis {
  BasisSpec spec;
  int size = 0;
  double radial_scale = 1.0;
  std::vector<ComplexGrid> filters;

  const ComplexGrid& at(int order_index, int orientation_index) const {
    return filters[static_cast<size_t>(order_index) * spec.orientation_count() +
                   orientation_index];
  }
};

SampledBasis build_basis(const BasisSpec& spec, int size, double radial_scale = 1.0);

}  // namespace scalesteer

#endif  // SCALESTEER_FILTERBANK_HPP
