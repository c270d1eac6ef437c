#include "scalesteer/steering.hpp"

#include <cmath>
#include <stdexcept>

#include "scalesteer/interp.hpp"

namespace scalesteer {

CoefficientSet CoefficientSet::zeros(const BasisSpec& spec) {
  CoefficientSet cs;
  cs.spec = spec;
  cs.c.assign(spec.filter_count(), {0.0, 0.0});
  return cs;
}

void CoefficientSet::validate() const {
  spec.validate();
  if (c.size() != static_cast<size_t>(spec.filter_count()))
    throw std::invalid_argument("CoefficientSet: coefficient count does not match spec");
}

int steered_odd_size(int base_size, double scale) {
  if (base_size <= 0 || base_size % 2 == 0)
    throw std::invalid_argument("steered_odd_size: base_size must be odd and positive");
  if (!(scale > 0.0)) throw std::invalid_argument("steered_odd_size: scale must be > 0");
  // nearest odd to base*scale; an even midpoint rounds to the larger odd
  const int n = 2 * static_cast<int>(std::floor(base_size * scale / 2.0)) + 1;
  if (n < 1) throw std::invalid_argument("steered_odd_size: steered size < 1");
  return n;
}

std::complex<double> order_phase(double order, double m, double scale) {
  return std::polar(std::pow(scale, m - 2.0), -order * std::log(scale));
}

ComplexGrid synthesize(const CoefficientSet& coeffs, const SampledBasis& basis) {
  coeffs.validate();
  if (!(coeffs.spec == basis.spec))
    throw std::invalid_argument("synthesize: coefficient spec does not match basis spec");
  ComplexGrid w(basis.size, basis.size);
  for (size_t f = 0; f < coeffs.c.size(); ++f) {
    const std::complex<double> ck = coeffs.c[f];
    if (ck == std::complex<double>{0.0, 0.0}) continue;
    const ComplexGrid& s = basis.filters[f];
    for (size_t i = 0; i < w.count(); ++i) w[i] += ck * s[i];
  }
  return w;
}

SteeredKernel steer(const CoefficientSet& coeffs, double scale, int base_size) {
  coeffs.validate();
  const int n = steered_odd_size(base_size, scale);
  const SampledBasis basis = build_basis(coeffs.spec, n);
  SteeredKernel out;
  out.scale = scale;
  out.values = RealGrid(n, n);
  ComplexGrid acc(n, n);
  for (int oi = 0; oi < coeffs.spec.order_count(); ++oi) {
    acc.fill({0.0, 0.0});
    for (int ji = 0; ji < coeffs.spec.orientation_count(); ++ji) {
      const std::complex<double> ck = coeffs.at(oi, ji);
      const ComplexGrid& s = basis.at(oi, ji);
      for (size_t i = 0; i < acc.count(); ++i) acc[i] += ck * s[i];
    }
    const std::complex<double> phase = order_phase(coeffs.spec.orders[oi], coeffs.spec.m, scale);
    for (size_t i = 0; i < acc.count(); ++i) out.values[i] += (phase * acc[i]).real();
  }
  return out;
}

RealGrid oracle_resample(const CoefficientSet& coeffs, double scale, int base_size) {
  coeffs.validate();
  const int n = steered_odd_size(base_size, scale);
  const BasisSpec& spec = coeffs.spec;
  RealGrid out(n, n);
  const int c = (n - 1) / 2;
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const double x = col - c;
      const double y = c - row;
      const double r = std::hypot(x, y);
      const double phi = std::atan2(y, x);
      double v = 0.0;
      for (int oi = 0; oi < spec.order_count(); ++oi)
        for (int ji = 0; ji < spec.orientation_count(); ++ji)
          v += (order_phase(spec.orders[oi], spec.m, scale) * coeffs.at(oi, ji) *
                eval_basis(spec, oi, ji, r, phi))
                   .real();
      out(row, col) = v;
    }
  return out;
}

namespace {

// Centre responses of every basis filter against `pattern(x*cs, y*cs)` over
// the disk r <= mask_radius, on a grid oversampled by `u`. The 1/u^2 factor
// is the area element.
std::vector<std::complex<double>> disk_responses(
    const BasisSpec& spec, const std::function<double(double, double)>& pattern,
    double content_scale, double mask_radius, int grid_size, int u, double* max_abs_sample) {
  const int c = (grid_size - 1) / 2;
  const double inv_u = 1.0 / u;
  const double cell = inv_u * inv_u;
  std::vector<std::complex<double>> resp(spec.filter_count(), {0.0, 0.0});
  for (int row = 0; row < grid_size; ++row)
    for (int col = 0; col < grid_size; ++col) {
      const double x = (col - c) * inv_u;
      const double y = (c - row) * inv_u;
      const double r = std::hypot(x, y);
      if (r > mask_radius) continue;
      const double v = pattern(x * content_scale, y * content_scale);
      if (max_abs_sample) *max_abs_sample = std::max(*max_abs_sample, std::abs(v));
      if (v == 0.0) continue;
      const double phi = std::atan2(y, x);
      const double w = v * cell;
      for (int oi = 0; oi < spec.order_count(); ++oi)
        for (int ji = 0; ji < spec.orientation_count(); ++ji)
          resp[static_cast<size_t>(oi) * spec.orientation_count() + ji] +=
              w * eval_basis(spec, oi, ji, r, phi);
    }
  return resp;
}

double rel_err(double num, double denom_a, double denom_b) {
  const double d = std::max(denom_a, denom_b);
  return d == 0.0 ? 0.0 : num / d;
}

}  // namespace

ScaleResponseReport verify_scale_response_detail(
    const std::function<double(double, double)>& pattern, const CoefficientSet& coeffs,
    double scale, int base_size, int upsample_factor) {
  coeffs.validate();
  if (!(scale > 0.0)) throw std::invalid_argument("verify_scale_response: scale must be > 0");
  if (upsample_factor < 1)
    throw std::invalid_argument("verify_scale_response: upsample_factor must be >= 1");
  const BasisSpec& spec = coeffs.spec;
  const double a = (base_size - 1) / 2.0;
  const int u = upsample_factor;

  // side a: pattern shrunk by s, base-radius kernel; side b: pattern as is,
  // kernel radius a*s, order groups corrected by the steering phase
  const int na = steered_odd_size(base_size, static_cast<double>(u));
  const int nb = steered_odd_size(base_size, scale * u);
  double max_sample = 0.0;
  const auto resp_a = disk_responses(spec, pattern, scale, a, na, u, nullptr);
  const auto resp_b = disk_responses(spec, pattern, 1.0, a * scale, nb, u, &max_sample);
  if (max_sample == 0.0)
    throw std::domain_error("verify_scale_response: pattern is identically zero on the patch");

  ScaleResponseReport res;
  std::vector<std::complex<double>> rho_a(spec.order_count()), rho_b(spec.order_count());
  for (int oi = 0; oi < spec.order_count(); ++oi) {
    std::complex<double> sa{0.0, 0.0}, sb{0.0, 0.0};
    for (int ji = 0; ji < spec.orientation_count(); ++ji) {
      const size_t f = static_cast<size_t>(oi) * spec.orientation_count() + ji;
      sa += coeffs.c[f] * resp_a[f];
      sb += coeffs.c[f] * resp_b[f];
    }
    rho_a[oi] = sa;
    rho_b[oi] = order_phase(spec.orders[oi], spec.m, scale) * sb;
    res.order_errors.push_back(
        rel_err(std::abs(rho_a[oi] - rho_b[oi]), std::abs(rho_a[oi]), std::abs(rho_b[oi])));
    res.order_errors_real.push_back(rel_err(std::abs(rho_a[oi].real() - rho_b[oi].real()),
                                            std::abs(rho_a[oi].real()),
                                            std::abs(rho_b[oi].real())));
  }
  double diff2 = 0.0, a2 = 0.0, b2 = 0.0;
  for (int oi = 0; oi < spec.order_count(); ++oi) {
    diff2 += std::norm(rho_a[oi] - rho_b[oi]);
    a2 += std::norm(rho_a[oi]);
    b2 += std::norm(rho_b[oi]);
  }
  res.overall = rel_err(std::sqrt(diff2), std::sqrt(a2), std::sqrt(b2));
  return res;
}

ScaleResponseReport verify_scale_response_detail(const RealGrid& pattern,
                                                 const CoefficientSet& coeffs, double scale,
                                                 int base_size, int upsample_factor) {
  const double cr = (pattern.rows() - 1) / 2.0;
  const double cc = (pattern.cols() - 1) / 2.0;
  auto fn = [&](double x, double y) { return bicubic_sample(pattern, cr - y, cc + x); };
  return verify_scale_response_detail(fn, coeffs, scale, base_size, upsample_factor);
}

double verify_scale_response(const RealGrid& pattern, const CoefficientSet& coeffs, double scale,
                             int base_size, int upsample_factor) {
  return verify_scale_response_detail(pattern, coeffs, scale, base_size, upsample_factor).overall;
}

}  // namespace scalesteer
