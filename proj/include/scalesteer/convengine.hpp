#pragma once

#include <vector>

#include "scalesteer/grid.hpp"
#include "scalesteer/steering.hpp"

namespace scalesteer {

enum class Padding { same, valid };

using IntGrid = Grid<int>;

// Discrete cross-correlation. "same" zero-pads so the output matches the
// image size; "valid" requires the kernel to fit inside the image.
RealGrid xcorr2(const RealGrid& image, const RealGrid& kernel, Padding padding);

// Bilinear upsampling by an integer factor; corner pixels map onto corner
// pixels, interior positions interpolate between their two neighbours.
RealGrid upsample(const RealGrid& image, int factor);

struct ScalePyramidResponse {
  std::vector<RealGrid> per_scale;  // one map per scale, common size
  RealGrid pooled;                  // elementwise max across scales
  IntGrid argmax_scale;             // winning scale index, ties to lowest
};

// One output channel of the scale-invariant layer: each input channel's
// kernel is steered to every scale and correlated ("same"); channels sum
// into one map per scale; the stack is max-pooled across scales.
ScalePyramidResponse scale_invariant_forward(const std::vector<RealGrid>& input,
                                             const std::vector<CoefficientSet>& coeffs,
                                             const std::vector<double>& scales, int base_size);

}  // namespace scalesteer
