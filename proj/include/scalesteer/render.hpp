#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scalesteer/convengine.hpp"
#include "scalesteer/grid.hpp"

namespace scalesteer {

enum class Normalize { per_tile, global };

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major

  uint8_t at(int r, int c) const { return pixels[size_t(r) * width + c]; }
};

// Tiles arranged row-major with 1-px separators; each tile mapped linearly
// to [0,255] over its own range (per_tile) or the shared range (global).
// A flat tile renders mid-gray. All tiles must share one shape and fit the
// layout.
PgmImage render_grid(const std::vector<RealGrid>& grids, int rows, int cols, Normalize mode);

std::vector<uint8_t> encode_pgm(const PgmImage& img);  // binary P5
void write_pgm(const PgmImage& img, const std::string& path);
PgmImage read_pgm(const std::string& path);

// Mean of the pooled response maps across channels.
RealGrid average_activation(const std::vector<ScalePyramidResponse>& responses);

}  // namespace scalesteer
