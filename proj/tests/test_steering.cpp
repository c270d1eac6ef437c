#include <cmath>
#include <complex>

#include "doctest.h"
#include "scalesteer/rng.hpp"
#include "scalesteer/steering.hpp"

using namespace scalesteer;

namespace {

CoefficientSet random_coeffs(const BasisSpec& spec, Rng& rng) {
  CoefficientSet cs = CoefficientSet::zeros(spec);
  for (auto& c : cs.c) c = {rng.normal(), rng.normal()};
  return cs;
}

double blob(double x, double y) {
  auto g = [](double x, double y, double cx, double cy, double sx, double sy) {
    const double dx = (x - cx) / sx, dy = (y - cy) / sy;
    return std::exp(-0.5 * (dx * dx + dy * dy));
  };
  return g(x, y, 2.5, -1.5, 2.2, 2.8) + 0.6 * g(x, y, -3.0, 2.0, 2.5, 1.8);
}

}  // namespace

TEST_CASE("steered_odd_size rounding") {
  CHECK(steered_odd_size(7, 1.0) == 7);
  CHECK(steered_odd_size(7, 2.4) == 17);
  CHECK(steered_odd_size(7, 8.0 / 7.0) == 9);   // lands on 8, ties round up
  CHECK(steered_odd_size(5, 0.2) == 1);
  CHECK(steered_odd_size(9, 1.9) == 17);        // 17.1 -> 17
  CHECK_THROWS_AS(steered_odd_size(6, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(steered_odd_size(7, 0.0), std::invalid_argument);
}

TEST_CASE("order phase multipliers") {
  SUBCASE("identity at s = 1") {
    CHECK(order_phase(2.0, 1.0, 1.0) == std::complex<double>(1.0, 0.0));
  }
  SUBCASE("modulus is s^(m-2)") {
    CHECK(std::abs(order_phase(1.0, 1.0, 2.0)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::abs(order_phase(1.0, 2.0, 3.0)) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("composition: multipliers for s1 then s2 equal the multiplier for s1*s2") {
    for (double k : {0.5, 1.0, 2.0})
      for (double s1 : {0.7, 1.3, 2.0})
        for (double s2 : {0.8, 1.5}) {
          const auto lhs = order_phase(k, 1.0, s1) * order_phase(k, 1.0, s2);
          const auto rhs = order_phase(k, 1.0, s1 * s2);
          CHECK(std::abs(lhs - rhs) < 1e-15 * std::abs(rhs) + 1e-300);
        }
  }
}

TEST_CASE("synthesize") {
  const BasisSpec spec = BasisSpec::defaults();
  const SampledBasis basis = build_basis(spec, 9);

  SUBCASE("zero coefficients give the zero grid") {
    const ComplexGrid w = synthesize(CoefficientSet::zeros(spec), basis);
    for (size_t i = 0; i < w.count(); ++i) CHECK(w[i] == std::complex<double>(0.0, 0.0));
  }

  SUBCASE("a single unit coefficient selects that filter verbatim") {
    CoefficientSet cs = CoefficientSet::zeros(spec);
    cs.at(1, 4) = {1.0, 0.0};
    const ComplexGrid w = synthesize(cs, basis);
    const ComplexGrid& f = basis.at(1, 4);
    for (size_t i = 0; i < w.count(); ++i) CHECK(w[i] == f[i]);
  }

  SUBCASE("linear in the coefficients") {
    Rng rng(7);
    const CoefficientSet c1 = random_coeffs(spec, rng);
    const CoefficientSet c2 = random_coeffs(spec, rng);
    CoefficientSet sum = c1;
    for (size_t i = 0; i < sum.c.size(); ++i) sum.c[i] += c2.c[i];
    const ComplexGrid w1 = synthesize(c1, basis);
    const ComplexGrid w2 = synthesize(c2, basis);
    const ComplexGrid ws = synthesize(sum, basis);
    for (size_t i = 0; i < ws.count(); ++i)
      CHECK(std::abs(ws[i] - (w1[i] + w2[i])) < 1e-12 * (1.0 + std::abs(ws[i])));
  }

  SUBCASE("spec mismatch is rejected") {
    BasisSpec other = spec;
    other.sigma_phi *= 2;
    CHECK_THROWS_AS(synthesize(CoefficientSet::zeros(other), basis), std::invalid_argument);
  }
}

TEST_CASE("steering") {
  const BasisSpec spec = BasisSpec::defaults();
  Rng rng(42);

  SUBCASE("s = 1 equals the synthesized real part") {
    const CoefficientSet cs = random_coeffs(spec, rng);
    const SteeredKernel k = steer(cs, 1.0, 9);
    const ComplexGrid w = synthesize(cs, build_basis(spec, 9));
    REQUIRE(k.size() == 9);
    for (size_t i = 0; i < w.count(); ++i)
      CHECK(k.values[i] == doctest::Approx(w[i].real()).epsilon(1e-14));
  }

  SUBCASE("matches the per-pixel analytic oracle") {
    for (int t = 0; t < 20; ++t) {
      const CoefficientSet cs = random_coeffs(spec, rng);
      for (double s : {0.7, 1.0, 1.3, 2.0, 2.4}) {
        const RealGrid a = steer(cs, s, 7).values;
        const RealGrid b = oracle_resample(cs, s, 7);
        REQUIRE(a.rows() == b.rows());
        CHECK(max_abs_diff(a, b) < 1e-10 * std::max(max_abs(a), 1e-300));
      }
    }
  }

  SUBCASE("steering is linear in the coefficients") {
    const CoefficientSet c1 = random_coeffs(spec, rng);
    const CoefficientSet c2 = random_coeffs(spec, rng);
    CoefficientSet mix = c1;
    for (size_t i = 0; i < mix.c.size(); ++i) mix.c[i] = 2.5 * c1.c[i] + c2.c[i];
    const RealGrid k1 = steer(c1, 1.3, 7).values;
    const RealGrid k2 = steer(c2, 1.3, 7).values;
    const RealGrid km = steer(mix, 1.3, 7).values;
    for (size_t i = 0; i < km.count(); ++i)
      CHECK(km[i] == doctest::Approx(2.5 * k1[i] + k2[i]).epsilon(1e-12));
  }

  SUBCASE("single order at s = e^(2pi/k): phase collapses to the amplitude factor") {
    CoefficientSet cs = CoefficientSet::zeros(spec);
    cs.at(2, 1) = {0.8, -0.3};  // order k = 2
    cs.at(2, 6) = {-0.2, 0.5};
    const double s = std::exp(2 * std::numbers::pi / 2.0);
    const SteeredKernel steered = steer(cs, s, 3);
    const int n = steered.size();
    const ComplexGrid plain = synthesize(cs, build_basis(spec, n));
    const double amp = std::pow(s, spec.m - 2.0);
    for (size_t i = 0; i < plain.count(); ++i)
      CHECK(steered.values[i] ==
            doctest::Approx(amp * plain[i].real()).epsilon(1e-10).scale(amp));
  }
}

TEST_CASE("response scaling identity") {
  const BasisSpec spec = BasisSpec::defaults();
  Rng rng(3);
  const CoefficientSet cs = random_coeffs(spec, rng);

  SUBCASE("s = 1 gives zero error") {
    const double err = verify_scale_response_detail(blob, cs, 1.0, 21, 1).overall;
    CHECK(err == 0.0);
  }

  SUBCASE("error shrinks when the grid is refined") {
    const ScaleResponseReport r1 = verify_scale_response_detail(blob, cs, 1.5, 21, 1);
    const ScaleResponseReport r2 = verify_scale_response_detail(blob, cs, 1.5, 21, 2);
    REQUIRE(r1.order_errors.size() == 3);
    for (size_t oi = 0; oi < 3; ++oi) CHECK(r2.order_errors[oi] < r1.order_errors[oi]);
    CHECK(r2.overall < r1.overall);
  }

  SUBCASE("real parts alone also converge") {
    const ScaleResponseReport r1 = verify_scale_response_detail(blob, cs, 1.5, 21, 1);
    const ScaleResponseReport r2 = verify_scale_response_detail(blob, cs, 1.5, 21, 2);
    for (size_t oi = 0; oi < 3; ++oi)
      CHECK(r2.order_errors_real[oi] < r1.order_errors_real[oi]);
  }

  SUBCASE("an image grid can stand in for the closed form") {
    RealGrid img(61, 61);
    for (int r = 0; r < 61; ++r)
      for (int c = 0; c < 61; ++c) img(r, c) = blob(c - 30.0, 30.0 - r);
    const double e1 = verify_scale_response(img, cs, 1.5, 21, 1);
    const double e2 = verify_scale_response(img, cs, 1.5, 21, 2);
    CHECK(e2 < e1);
  }

  SUBCASE("an identically zero patch is rejected") {
    auto zero = [](double, double) { return 0.0; };
    CHECK_THROWS_AS(verify_scale_response_detail(zero, cs, 1.5, 21, 1), std::domain_error);
  }
}

TEST_CASE("coefficient count is validated") {
  CoefficientSet cs = CoefficientSet::zeros(BasisSpec::defaults());
  cs.c.pop_back();
  CHECK_THROWS_AS(cs.validate(), std::invalid_argument);
}
