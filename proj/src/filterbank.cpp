#include "scalesteer/filterbank.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace scalesteer {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

BasisSpec BasisSpec::defaults() {
  BasisSpec spec;
  spec.orders = {0.5, 1.0, 2.0};
  spec.orientations.reserve(8);
  for (int j = 1; j <= 8; ++j) spec.orientations.push_back(j * std::numbers::pi / 8.0);
  spec.sigma_phi = std::numbers::pi / 16.0;
  spec.beta = 0.0;
  spec.m = 1.0;
  return spec;
}

void BasisSpec::validate() const {
  if (orders.empty()) throw std::invalid_argument("BasisSpec: orders empty");
  for (double k : orders)
    if (!(k > 0.0)) throw std::invalid_argument("BasisSpec: orders must be > 0");
  if (orientations.empty()) throw std::invalid_argument("BasisSpec: orientations empty");
  for (size_t i = 0; i < orientations.size(); ++i) {
    double p = orientations[i];
    if (!(p >= 0.0 && p < kTwoPi))
      throw std::invalid_argument("BasisSpec: orientations must lie in [0, 2pi)");
    for (size_t j = i + 1; j < orientations.size(); ++j)
      if (p == orientations[j])
        throw std::invalid_argument("BasisSpec: orientations must be pairwise distinct");
  }
  if (!(sigma_phi > 0.0)) throw std::invalid_argument("BasisSpec: sigma_phi must be > 0");
}

bool BasisSpec::operator==(const BasisSpec& o) const {
  return orders == o.orders && orientations == o.orientations &&
         sigma_phi == o.sigma_phi && beta == o.beta && m == o.m;
}

double angular_distance(double phi, double phi_j) {
  double d = std::fmod(std::abs(phi - phi_j), kTwoPi);
  return std::min(d, kTwoPi - d);
}

std::complex<double> eval_basis(const BasisSpec& spec, int order_index,
                                int orientation_index, double r, double phi) {
  if (r == 0.0) return {1.0, 0.0};
  const double k = spec.orders[order_index];
  const double phi_j = spec.orientations[orientation_index];
  const double inv2s2 = 1.0 / (2.0 * spec.sigma_phi * spec.sigma_phi);
  const double d1 = angular_distance(phi, phi_j);
  const double d2 = angular_distance(phi, phi_j + std::numbers::pi);
  const double angular = std::exp(-d1 * d1 * inv2s2) + std::exp(-d2 * d2 * inv2s2);
  const double radial = std::pow(r, -spec.m);
  const double theta = k * std::log(r) + spec.beta;
  return std::polar(angular * radial, theta);
}

ComplexGrid sample_basis_filter(const BasisSpec& spec, int order_index,
                                int orientation_index, int size,
                                double radial_scale) {
  if (size <= 0 || size % 2 == 0)
    throw std::invalid_argument("sample_basis_filter: size must be odd and positive");
  if (!(radial_scale > 0.0))
    throw std::invalid_argument("sample_basis_filter: radial_scale must be > 0");
  if (order_index < 0 || order_index >= spec.order_count() || orientation_index < 0 ||
      orientation_index >= spec.orientation_count())
    throw std::invalid_argument("sample_basis_filter: index out of range");

  ComplexGrid out(size, size);
  const int c = (size - 1) / 2;
  for (int row = 0; row <= c; ++row) {
    const int col_end = (row == c) ? c - 1 : size - 1;
    for (int col = 0; col <= col_end; ++col) {
      const double x = col - c;
      const double y = c - row;
      const double r = std::hypot(x, y) / radial_scale;
      const std::complex<double> v =
          eval_basis(spec, order_index, orientation_index, r, std::atan2(y, x));
      out(row, col) = v;
      out(size - 1 - row, size - 1 - col) = v;  // S(r, phi + pi) == S(r, phi)
    }
  }
  out(c, c) = {1.0, 0.0};
  return out;
}

SampledBasis build_basis(const BasisSpec& spec, int size, double radial_scale) {
  spec.validate();
  SampledBasis basis;
  basis.spec = spec;
  basis.size = size;
  basis.radial_scale = radial_scale;
  basis.filters.reserve(spec.filter_count());
  for (int oi = 0; oi < spec.order_count(); ++oi)
    for (int ji = 0; ji < spec.orientation_count(); ++ji)
      basis.filters.push_back(sample_basis_filter(spec, oi, ji, size, radial_scale));
  return basis;
}

}  // namespace scalesteer
