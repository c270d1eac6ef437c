#pragma once

#include "scalesteer/grid.hpp"

namespace scalesteer {

// Continuous sampling in index coordinates (row, col). Points outside the
// grid read as zero; exactly-on-grid points reproduce the stored value.
double bilinear_sample(const RealGrid& g, double row, double col);

// Catmull-Rom cubic (4x4 support), zero padding outside.
double bicubic_sample(const RealGrid& g, double row, double col);

// Content magnified by `factor` about the grid centre, output centred in a
// (out_rows x out_cols) grid: out(p) = in(c_in + (p - c_out) / factor).
// factor < 1 shrinks the content. Bilinear unless `cubic`.
RealGrid scale_about_center(const RealGrid& img, double factor, int out_rows, int out_cols,
                            bool cubic = false);

}  // namespace scalesteer
