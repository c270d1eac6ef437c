#include "scalesteer/interp.hpp"

#include <cmath>

namespace scalesteer {

namespace {

double at_or_zero(const RealGrid& g, long r, long c) {
  if (r < 0 || c < 0 || r >= g.rows() || c >= g.cols()) return 0.0;
  return g(static_cast<int>(r), static_cast<int>(c));
}

// Catmull-Rom taps for fractional offset t in [0, 1).
void cubic_weights(double t, double w[4]) {
  w[0] = ((-0.5 * t + 1.0) * t - 0.5) * t;
  w[1] = (1.5 * t - 2.5) * t * t + 1.0;
  w[2] = ((-1.5 * t + 2.0) * t + 0.5) * t;
  w[3] = (0.5 * t - 0.5) * t * t;
}

}  // namespace

double bilinear_sample(const RealGrid& g, double row, double col) {
  const double fr = std::floor(row), fc = std::floor(col);
  const long r0 = static_cast<long>(fr), c0 = static_cast<long>(fc);
  const double tr = row - fr, tc = col - fc;
  const double v00 = at_or_zero(g, r0, c0), v01 = at_or_zero(g, r0, c0 + 1);
  const double v10 = at_or_zero(g, r0 + 1, c0), v11 = at_or_zero(g, r0 + 1, c0 + 1);
  const double top = v00 + tc * (v01 - v00);
  const double bot = v10 + tc * (v11 - v10);
  return top + tr * (bot - top);
}

double bicubic_sample(const RealGrid& g, double row, double col) {
  const double fr = std::floor(row), fc = std::floor(col);
  const long r0 = static_cast<long>(fr), c0 = static_cast<long>(fc);
  double wr[4], wc[4];
  cubic_weights(row - fr, wr);
  cubic_weights(col - fc, wc);
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (wr[i] == 0.0) continue;
    double line = 0.0;
    for (int j = 0; j < 4; ++j) line += wc[j] * at_or_zero(g, r0 - 1 + i, c0 - 1 + j);
    acc += wr[i] * line;
  }
  return acc;
}

RealGrid scale_about_center(const RealGrid& img, double factor, int out_rows, int out_cols,
                            bool cubic) {
  RealGrid out(out_rows, out_cols);
  const double cr_in = (img.rows() - 1) / 2.0, cc_in = (img.cols() - 1) / 2.0;
  const double cr_out = (out_rows - 1) / 2.0, cc_out = (out_cols - 1) / 2.0;
  for (int r = 0; r < out_rows; ++r)
    for (int c = 0; c < out_cols; ++c) {
      const double sr = cr_in + (r - cr_out) / factor;
      const double sc = cc_in + (c - cc_out) / factor;
      out(r, c) = cubic ? bicubic_sample(img, sr, sc) : bilinear_sample(img, sr, sc);
    }
  return out;
}

}  // namespace scalesteer
