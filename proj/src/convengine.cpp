#include "scalesteer/convengine.hpp"

#include <stdexcept>

namespace scalesteer {

RealGrid xcorr2(const RealGrid& image, const RealGrid& kernel, Padding padding) {
  const int ir = image.rows(), ic = image.cols();
  const int kr = kernel.rows(), kc = kernel.cols();
  if (padding == Padding::valid) {
    if (kr > ir || kc > ic)
      throw std::invalid_argument("xcorr2: kernel larger than image in valid mode");
    RealGrid out(ir - kr + 1, ic - kc + 1);
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out.cols(); ++c) {
        double acc = 0.0;
        for (int i = 0; i < kr; ++i)
          for (int j = 0; j < kc; ++j) acc += image(r + i, c + j) * kernel(i, j);
        out(r, c) = acc;
      }
    return out;
  }
  const int pr = (kr - 1) / 2, pc = (kc - 1) / 2;
  RealGrid out(ir, ic);
  for (int r = 0; r < ir; ++r)
    for (int c = 0; c < ic; ++c) {
      double acc = 0.0;
      const int i0 = std::max(0, pr - r), i1 = std::min(kr, ir + pr - r);
      const int j0 = std::max(0, pc - c), j1 = std::min(kc, ic + pc - c);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j) acc += image(r + i - pr, c + j - pc) * kernel(i, j);
      out(r, c) = acc;
    }
  return out;
}

RealGrid upsample(const RealGrid& image, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample: factor must be >= 1");
  if (factor == 1) return image;
  const int or_ = image.rows() * factor, oc = image.cols() * factor;
  RealGrid out(or_, oc);
  const double sr = or_ > 1 ? double(image.rows() - 1) / (or_ - 1) : 0.0;
  const double sc = oc > 1 ? double(image.cols() - 1) / (oc - 1) : 0.0;
  for (int r = 0; r < or_; ++r) {
    const double fr = r * sr;
    const int r0 = static_cast<int>(fr);
    const int r1 = std::min(r0 + 1, image.rows() - 1);
    const double tr = fr - r0;
    for (int c = 0; c < oc; ++c) {
      const double fc = c * sc;
      const int c0 = static_cast<int>(fc);
      const int c1 = std::min(c0 + 1, image.cols() - 1);
      const double tc = fc - c0;
      const double top = image(r0, c0) + tc * (image(r0, c1) - image(r0, c0));
      const double bot = image(r1, c0) + tc * (image(r1, c1) - image(r1, c0));
      out(r, c) = top + tr * (bot - top);
    }
  }
  return out;
}

ScalePyramidResponse scale_invariant_forward(const std::vector<RealGrid>& input,
                                             const std::vector<CoefficientSet>& coeffs,
                                             const std::vector<double>& scales, int base_size) {
  if (input.empty() || coeffs.size() != input.size())
    throw std::invalid_argument("scale_invariant_forward: need one coefficient set per channel");
  if (scales.empty())
    throw std::invalid_argument("scale_invariant_forward: scales empty");
  for (size_t i = 1; i < scales.size(); ++i)
    if (scales[i] < scales[i - 1])
      throw std::invalid_argument("scale_invariant_forward: scales must ascend");

  ScalePyramidResponse out;
  out.per_scale.reserve(scales.size());
  for (double s : scales) {
    RealGrid acc(input[0].rows(), input[0].cols());
    for (size_t ch = 0; ch < input.size(); ++ch) {
      const SteeredKernel k = steer(coeffs[ch], s, base_size);
      const RealGrid m = xcorr2(input[ch], k.values, Padding::same);
      for (size_t i = 0; i < acc.count(); ++i) acc[i] += m[i];
    }
    out.per_scale.push_back(std::move(acc));
  }

  out.pooled = out.per_scale[0];
  out.argmax_scale = IntGrid(out.pooled.rows(), out.pooled.cols());
  for (size_t s = 1; s < out.per_scale.size(); ++s)
    for (size_t i = 0; i < out.pooled.count(); ++i)
      if (out.per_scale[s][i] > out.pooled[i]) {
        out.pooled[i] = out.per_scale[s][i];
        out.argmax_scale[i] = static_cast<int>(s);
      }
  return out;
}

}  // namespace scalesteer
