#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scalesteer/grid.hpp"

namespace scalesteer {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LabeledImageSet {
  std::vector<RealGrid> images;  // values in [0,1]
  std::vector<int> labels;
  int width = 0;
  int height = 0;

  size_t count() const { return images.size(); }
};

// IDX containers (big-endian headers, magic 0x00000803 for image tensors and
// 0x00000801 for label vectors). Pixels are bytes mapped linearly to [0,1].
// Malformed input raises ParseError naming the byte offset.
LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const LabeledImageSet& set, const std::string& images_path,
              const std::string& labels_path);

// Each image scaled about its centre by a factor drawn uniformly from
// [lo, hi] (bilinear), re-embedded centred on a 28x28 canvas, black padding.
// Pixels are snapped to the 8-bit grid so an IDX round trip is exact.
LabeledImageSet make_scaled(const LabeledImageSet& set, double lo, double hi, uint64_t seed);

// Digit pairs (d, d+1 mod 10) side by side on a 28x40 canvas, label d.
// Each digit independently scaled by a factor in [0.7, 1], anchored at
// columns 10 and 30 with +-2 px horizontal jitter; overlaps composited by
// max. Requires all ten classes in the source set.
LabeledImageSet make_local2(const LabeledImageSet& set, uint64_t seed);

// Disjoint shuffled subsets of the requested sizes.
std::array<LabeledImageSet, 3> split(const LabeledImageSet& set, size_t train, size_t val,
                                     size_t test, uint64_t seed);

// Procedural 28x28 stroke-rendered digits (white on black), label i mod 10,
// with per-sample jitter in slant/scale/position/thickness. A self-contained
// source set for pipelines that normally start from MNIST-style files.
LabeledImageSet make_digits(size_t count, uint64_t seed);

// Small key=value sidecar recording how a synthesized set was produced.
void write_manifest(const std::string& path, const std::string& kind, uint64_t seed, double lo,
                    double hi, const LabeledImageSet& set);

}  // namespace scalesteer
