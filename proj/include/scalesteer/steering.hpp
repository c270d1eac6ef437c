#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "scalesteer/filterbank.hpp"
#include "scalesteer/grid.hpp"

namespace scalesteer {

// Complex weights c_kj, one per basis filter, order-major like SampledBasis.
struct CoefficientSet {
  BasisSpec spec;
  std::vector<std::complex<double>> c;

  static CoefficientSet zeros(const BasisSpec& spec);

  std::complex<double>& at(int order_index, int orientation_index) {
    return c[static_cast<size_t>(order_index) * spec.orientation_count() + orientation_index];
  }
  const std::complex<double>& at(int order_index, int orientation_index) const {
    return c[static_cast<size_t>(order_index) * spec.orientation_count() + orientation_index];
  }
  void validate() const;  // count matches spec
};

struct SteeredKernel {
  double scale = 1.0;
  RealGrid values;

  int size() const { return values.rows(); }
};

// Nearest odd integer to base_size * scale, ties upward.
int steered_odd_size(int base_size, double scale);

// Per-order steering multiplier s^(m-2) * exp(-i k log s).
std::complex<double> order_phase(double order, double m, double scale);

// W = sum_kj c_kj S^kj over the sampled basis grids.
ComplexGrid synthesize(const CoefficientSet& coeffs, const SampledBasis& basis);

// Kernel at scale s: basis re-sampled at the steered size, order groups
// multiplied by order_phase, real part taken.
SteeredKernel steer(const CoefficientSet& coeffs, double scale, int base_size);

// Ground truth for steer: the analytic form Re(s^(m-2) sum_kj c_kj
// e^(-ik log s) S^kj(r, phi)) evaluated independently pixel by pixel at the
// steered size — flat summation order, no mirroring, no grouping.
RealGrid oracle_resample(const CoefficientSet& coeffs, double scale, int base_size);

struct ScaleResponseReport {
  std::vector<double> order_errors;       // per-order relative response error
  std::vector<double> order_errors_real;  // same, real parts only
  double overall = 0.0;                   // Frobenius-relative across orders
};

// Numerical check of the response scaling identity: the centre response of
// the base-size kernel on the pattern scaled by s (content shrunk, disk
// radius a) against s^(m-2) e^(-ik log s) times the size-as kernel's
// response on the unscaled pattern (disk radius a*s), aggregated per order
// with the coefficients. upsample_factor oversamples both grids; the
// identity is exact only in the continuous limit, so errors shrink as the
// factor grows. The pattern image is read at continuous points by cubic
// interpolation and must not be identically zero.
ScaleResponseReport verify_scale_response_detail(const RealGrid& pattern,
                                                 const CoefficientSet& coeffs, double scale,
                                                 int base_size, int upsample_factor);
double verify_scale_response(const RealGrid& pattern, const CoefficientSet& coeffs, double scale,
                             int base_size, int upsample_factor);

// Same check with the pattern given in closed form (evaluated exactly at
// continuous (x, y), x right / y up, origin at the patch centre).
ScaleResponseReport verify_scale_response_detail(
    const std::function<double(double, double)>& pattern, const CoefficientSet& coeffs,
    double scale, int base_size, int upsample_factor);

}  // namespace scalesteer
