#include "doctest.h"
#include "scalesteer/interp.hpp"

using namespace scalesteer;

namespace {
RealGrid ramp(int n) {
  RealGrid g(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) g(r, c) = 2.0 * r + 0.5 * c;
  return g;
}
}  // namespace

TEST_CASE("bilinear sampling") {
  const RealGrid g = ramp(5);
  SUBCASE("grid points are reproduced exactly") {
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c) CHECK(bilinear_sample(g, r, c) == g(r, c));
  }
  SUBCASE("midpoints average the neighbours") {
    CHECK(bilinear_sample(g, 1.5, 2.0) == doctest::Approx(0.5 * (g(1, 2) + g(2, 2))));
    CHECK(bilinear_sample(g, 2.0, 1.5) == doctest::Approx(0.5 * (g(2, 1) + g(2, 2))));
    CHECK(bilinear_sample(g, 1.25, 3.75) ==
          doctest::Approx(2.0 * 1.25 + 0.5 * 3.75));  // ramp is bilinear-exact
  }
  SUBCASE("outside the grid reads zero") {
    CHECK(bilinear_sample(g, -2.0, 2.0) == 0.0);
    CHECK(bilinear_sample(g, 2.0, 7.0) == 0.0);
  }
}

TEST_CASE("bicubic sampling") {
  const RealGrid g = ramp(7);
  SUBCASE("grid points are reproduced exactly") {
    for (int r = 1; r < 6; ++r)
      for (int c = 1; c < 6; ++c) CHECK(bicubic_sample(g, r, c) == doctest::Approx(g(r, c)).epsilon(1e-15));
  }
  SUBCASE("linear ramps are reproduced in the interior") {
    CHECK(bicubic_sample(g, 2.3, 3.6) == doctest::Approx(2.0 * 2.3 + 0.5 * 3.6).epsilon(1e-12));
    CHECK(bicubic_sample(g, 3.75, 2.25) == doctest::Approx(2.0 * 3.75 + 0.5 * 2.25).epsilon(1e-12));
  }
}

TEST_CASE("scale_about_center") {
  SUBCASE("factor 1 with matching size is the identity") {
    const RealGrid g = ramp(9);
    const RealGrid s = scale_about_center(g, 1.0, 9, 9);
    for (size_t i = 0; i < g.count(); ++i) CHECK(s[i] == g[i]);
  }
  SUBCASE("factor 1/2 halves a centered square") {
    RealGrid g(21, 21);
    for (int r = 6; r <= 14; ++r)
      for (int c = 6; c <= 14; ++c) g(r, c) = 1.0;  // 9 px wide
    const RealGrid s = scale_about_center(g, 0.5, 21, 21);
    int min_c = 21, max_c = -1;
    for (int r = 0; r < 21; ++r)
      for (int c = 0; c < 21; ++c)
        if (s(r, c) > 0.5) {
          min_c = std::min(min_c, c);
          max_c = std::max(max_c, c);
        }
    const int width = max_c - min_c + 1;
    CHECK(width >= 4);
    CHECK(width <= 6);
  }
  SUBCASE("content stays centered") {
    RealGrid g(15, 15);
    g(7, 7) = 1.0;
    const RealGrid s = scale_about_center(g, 0.6, 15, 15);
    // the peak cannot move off center
    double best = -1;
    int br = -1, bc = -1;
    for (int r = 0; r < 15; ++r)
      for (int c = 0; c < 15; ++c)
        if (s(r, c) > best) {
          best = s(r, c);
          br = r;
          bc = c;
        }
    CHECK(br == 7);
    CHECK(bc == 7);
  }
}
