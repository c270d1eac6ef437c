#include "scalesteer/render.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace scalesteer {

namespace {

uint8_t shade(double v, double lo, double hi) {
  if (lo == hi) return 128;
  const double t = (v - lo) / (hi - lo);
  return static_cast<uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
}

}  // namespace

PgmImage render_grid(const std::vector<RealGrid>& grids, int rows, int cols, Normalize mode) {
  if (grids.empty()) throw std::invalid_argument("render_grid: no tiles");
  if (rows < 1 || cols < 1 || size_t(rows) * cols < grids.size())
    throw std::invalid_argument("render_grid: layout smaller than tile count");
  const int th = grids[0].rows(), tw = grids[0].cols();
  for (const RealGrid& g : grids)
    if (g.rows() != th || g.cols() != tw)
      throw std::invalid_argument("render_grid: tiles differ in shape");

  double glo = std::numeric_limits<double>::infinity(), ghi = -glo;
  if (mode == Normalize::global)
    for (const RealGrid& g : grids)
      for (size_t i = 0; i < g.count(); ++i) {
        glo = std::min(glo, g[i]);
        ghi = std::max(ghi, g[i]);
      }

  PgmImage img;
  img.width = cols * tw + (cols - 1);
  img.height = rows * th + (rows - 1);
  img.pixels.assign(size_t(img.width) * img.height, 255);  // separators and empty cells

  for (size_t t = 0; t < grids.size(); ++t) {
    const RealGrid& g = grids[t];
    double lo = glo, hi = ghi;
    if (mode == Normalize::per_tile) {
      lo = std::numeric_limits<double>::infinity();
      hi = -lo;
      for (size_t i = 0; i < g.count(); ++i) {
        lo = std::min(lo, g[i]);
        hi = std::max(hi, g[i]);
      }
    }
    const int r0 = int(t) / cols * (th + 1), c0 = int(t) % cols * (tw + 1);
    for (int r = 0; r < th; ++r)
      for (int c = 0; c < tw; ++c)
        img.pixels[size_t(r0 + r) * img.width + (c0 + c)] = shade(g(r, c), lo, hi);
  }
  return img;
}

std::vector<uint8_t> encode_pgm(const PgmImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void write_pgm(const PgmImage& img, const std::string& path) {
  const auto bytes = encode_pgm(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error(path + ": write failed");
}

PgmImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open");
  std::string magic;
  f >> magic;
  if (magic != "P5") throw std::runtime_error(path + ": not a binary PGM");
  auto next_int = [&] {
    int v;
    f >> std::ws;
    while (f.peek() == '#') f.ignore(std::numeric_limits<std::streamsize>::max(), '\n'), f >> std::ws;
    if (!(f >> v)) throw std::runtime_error(path + ": bad PGM header");
    return v;
  };
  PgmImage img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw std::runtime_error(path + ": unsupported maxval");
  f.get();  // single whitespace after maxval
  img.pixels.resize(size_t(img.width) * img.height);
  f.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (f.gcount() != std::streamsize(img.pixels.size()))
    throw std::runtime_error(path + ": truncated pixel data");
  return img;
}

RealGrid average_activation(const std::vector<ScalePyramidResponse>& responses) {
  if (responses.empty()) throw std::invalid_argument("average_activation: no responses");
  const int rows = responses[0].pooled.rows(), cols = responses[0].pooled.cols();
  RealGrid out(rows, cols);
  for (const ScalePyramidResponse& r : responses) {
    if (r.pooled.rows() != rows || r.pooled.cols() != cols)
      throw std::invalid_argument("average_activation: response sizes differ");
    for (size_t i = 0; i < out.count(); ++i) out[i] += r.pooled[i];
  }
  for (size_t i = 0; i < out.count(); ++i) out[i] /= double(responses.size());
  return out;
}

}  // namespace scalesteer
