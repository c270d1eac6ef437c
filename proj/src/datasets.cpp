#include "scalesteer/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "scalesteer/interp.hpp"
#include "scalesteer/rng.hpp"
#include "scalesteer/threading.hpp"

namespace scalesteer {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(path + ": cannot open");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

uint32_t read_u32_be(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw ParseError(path + ": truncated at offset " + std::to_string(off) +
                     " (need 4 bytes, have " + std::to_string(b.size() - off) + ")");
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) | (uint32_t(b[off + 2]) << 8) |
         uint32_t(b[off + 3]);
}

void write_u32_be(std::ofstream& f, uint32_t v) {
  const uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

// Snap to the 8-bit grid so file export/import is lossless.
double quantize01(double v) { return to_byte(v) / 255.0; }

void quantize_grid(RealGrid& g) {
  for (size_t i = 0; i < g.count(); ++i) g[i] = quantize01(g[i]);
}

LabeledImageSet gather(const LabeledImageSet& set, const std::vector<size_t>& idx, size_t begin,
                       size_t end) {
  LabeledImageSet out;
  out.width = set.width;
  out.height = set.height;
  out.images.reserve(end - begin);
  out.labels.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) {
    out.images.push_back(set.images[idx[i]]);
    out.labels.push_back(set.labels[idx[i]]);
  }
  return out;
}

}  // namespace

LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto ib = read_file(images_path);
  const auto lb = read_file(labels_path);

  char hex[16];
  const uint32_t im = read_u32_be(ib, 0, images_path);
  if (im != kImageMagic) {
    std::snprintf(hex, sizeof hex, "0x%08x", im);
    throw ParseError(images_path + ": bad magic " + hex + " at offset 0");
  }
  const uint32_t lm = read_u32_be(lb, 0, labels_path);
  if (lm != kLabelMagic) {
    std::snprintf(hex, sizeof hex, "0x%08x", lm);
    throw ParseError(labels_path + ": bad magic " + hex + " at offset 0");
  }

  const uint32_t n = read_u32_be(ib, 4, images_path);
  const uint32_t rows = read_u32_be(ib, 8, images_path);
  const uint32_t cols = read_u32_be(ib, 12, images_path);
  const uint32_t ln = read_u32_be(lb, 4, labels_path);
  if (n != ln)
    throw ParseError(images_path + ": image count " + std::to_string(n) + " at offset 4 != label count " +
                     std::to_string(ln));

  const size_t need = size_t(n) * rows * cols;
  if (ib.size() < 16 + need)
    throw ParseError(images_path + ": truncated at offset " + std::to_string(ib.size()) +
                     " (need " + std::to_string(16 + need) + " bytes)");
  if (lb.size() < 8 + n)
    throw ParseError(labels_path + ": truncated at offset " + std::to_string(lb.size()) +
                     " (need " + std::to_string(8 + size_t(n)) + " bytes)");

  LabeledImageSet out;
  out.width = int(cols);
  out.height = int(rows);
  out.images.reserve(n);
  out.labels.reserve(n);
  size_t off = 16;
  for (uint32_t i = 0; i < n; ++i) {
    RealGrid img(static_cast<int>(rows), static_cast<int>(cols));
    for (size_t p = 0; p < size_t(rows) * cols; ++p) img[p] = ib[off + p] / 255.0;
    off += size_t(rows) * cols;
    out.images.push_back(std::move(img));
    out.labels.push_back(lb[8 + i]);
  }
  return out;
}

void save_idx(const LabeledImageSet& set, const std::string& images_path,
              const std::string& labels_path) {
  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) throw std::runtime_error(images_path + ": cannot open for writing");
  write_u32_be(fi, kImageMagic);
  write_u32_be(fi, uint32_t(set.count()));
  write_u32_be(fi, uint32_t(set.height));
  write_u32_be(fi, uint32_t(set.width));
  std::vector<uint8_t> row;
  for (const RealGrid& img : set.images) {
    row.resize(img.count());
    for (size_t p = 0; p < img.count(); ++p) row[p] = to_byte(img[p]);
    fi.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!fi) throw std::runtime_error(images_path + ": write failed");

  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) throw std::runtime_error(labels_path + ": cannot open for writing");
  write_u32_be(fl, kLabelMagic);
  write_u32_be(fl, uint32_t(set.count()));
  for (int l : set.labels) {
    const uint8_t b = uint8_t(l);
    fl.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!fl) throw std::runtime_error(labels_path + ": write failed");
}

LabeledImageSet make_scaled(const LabeledImageSet& set, double lo, double hi, uint64_t seed) {
  if (!(lo > 0.0) || !(lo <= hi))
    throw std::invalid_argument("make_scaled: need 0 < lo <= hi");
  LabeledImageSet out;
  out.width = 28;
  out.height = 28;
  out.labels = set.labels;
  out.images.assign(set.count(), RealGrid());
  parallel_for(set.count(), [&](size_t i) {
    Rng rng = Rng::for_index(seed, i);
    const double f = rng.uniform(lo, hi);
    RealGrid img = scale_about_center(set.images[i], f, 28, 28);
    quantize_grid(img);
    out.images[i] = std::move(img);
  });
  return out;
}

LabeledImageSet make_local2(const LabeledImageSet& set, uint64_t seed) {
  std::vector<std::vector<size_t>> by_class(10);
  for (size_t i = 0; i < set.count(); ++i)
    if (set.labels[i] >= 0 && set.labels[i] < 10) by_class[set.labels[i]].push_back(i);
  for (int d = 0; d < 10; ++d)
    if (by_class[d].empty())
      throw std::invalid_argument("make_local2: source set missing digit class " +
                                  std::to_string(d));

  LabeledImageSet out;
  out.width = 40;
  out.height = 28;
  out.labels.resize(set.count());
  out.images.assign(set.count(), RealGrid());
  parallel_for(set.count(), [&](size_t i) {
    Rng rng = Rng::for_index(seed, i);
    const int d = int(i % 10);
    const auto& left_pool = by_class[d];
    const auto& right_pool = by_class[(d + 1) % 10];
    const RealGrid& li = set.images[left_pool[rng.uniform_int(left_pool.size())]];
    const RealGrid& ri = set.images[right_pool[rng.uniform_int(right_pool.size())]];
    const double fl = rng.uniform(0.7, 1.0);
    const double fr = rng.uniform(0.7, 1.0);
    const int jl = int(rng.uniform_int(5)) - 2;
    const int jr = int(rng.uniform_int(5)) - 2;

    RealGrid canvas(28, 40);
    auto blit = [&](const RealGrid& tile, int anchor_col) {
      const int off = anchor_col - 13;  // tile centre straddles the anchor
      for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
          const int dc = c + off;
          if (dc < 0 || dc >= 40) continue;
          canvas(r, dc) = std::max(canvas(r, dc), tile(r, c));
        }
    };
    blit(scale_about_center(li, fl, 28, 28), 10 + jl);
    blit(scale_about_center(ri, fr, 28, 28), 30 + jr);
    quantize_grid(canvas);
    out.images[i] = std::move(canvas);
    out.labels[i] = d;
  });
  return out;
}

std::array<LabeledImageSet, 3> split(const LabeledImageSet& set, size_t train, size_t val,
                                     size_t test, uint64_t seed) {
  if (train + val + test > set.count())
    throw std::invalid_argument("split: requested sizes exceed set count");
  std::vector<size_t> idx(set.count());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  return {gather(set, idx, 0, train), gather(set, idx, train, train + val),
          gather(set, idx, train + val, train + val + test)};
}

namespace {

struct Seg {
  double x0, y0, x1, y1;
};

void add_poly(std::vector<Seg>& out, std::initializer_list<std::pair<double, double>> pts) {
  auto it = pts.begin();
  auto prev = *it++;
  for (; it != pts.end(); ++it) {
    out.push_back({prev.first, prev.second, it->first, it->second});
    prev = *it;
  }
}

void add_arc(std::vector<Seg>& out, double cx, double cy, double rx, double ry, double a0,
             double a1, int n) {
  double px = cx + rx * std::cos(a0), py = cy + ry * std::sin(a0);
  for (int i = 1; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * i / n;
    const double x = cx + rx * std::cos(a), y = cy + ry * std::sin(a);
    out.push_back({px, py, x, y});
    px = x;
    py = y;
  }
}

// Stroke archetypes in a unit box, x right / y down.
const std::vector<Seg>& digit_strokes(int d) {
  static const std::vector<std::vector<Seg>> all = [] {
    constexpr double pi = std::numbers::pi;
    std::vector<std::vector<Seg>> v(10);
    add_arc(v[0], 0.50, 0.50, 0.30, 0.40, 0, 2 * pi, 28);
    add_poly(v[1], {{0.35, 0.22}, {0.52, 0.08}, {0.52, 0.92}});
    add_arc(v[2], 0.50, 0.30, 0.28, 0.22, pi, 2 * pi, 14);
    add_poly(v[2], {{0.78, 0.30}, {0.22, 0.90}, {0.80, 0.90}});
    add_arc(v[3], 0.45, 0.30, 0.28, 0.21, -pi / 2, pi / 2, 14);
    add_arc(v[3], 0.45, 0.70, 0.30, 0.21, -pi / 2, pi / 2, 14);
    add_poly(v[4], {{0.58, 0.08}, {0.18, 0.60}, {0.85, 0.60}});
    add_poly(v[4], {{0.62, 0.35}, {0.62, 0.92}});
    add_poly(v[5], {{0.75, 0.10}, {0.30, 0.10}, {0.27, 0.48}});
    add_arc(v[5], 0.45, 0.67, 0.28, 0.22, -1.2, 2.4, 16);
    add_poly(v[6], {{0.62, 0.08}, {0.40, 0.45}});
    add_arc(v[6], 0.47, 0.68, 0.25, 0.22, 0, 2 * pi, 24);
    add_poly(v[7], {{0.20, 0.10}, {0.80, 0.10}, {0.40, 0.92}});
    add_arc(v[8], 0.50, 0.30, 0.23, 0.20, 0, 2 * pi, 24);
    add_arc(v[8], 0.50, 0.71, 0.27, 0.21, 0, 2 * pi, 24);
    add_arc(v[9], 0.50, 0.32, 0.24, 0.21, 0, 2 * pi, 24);
    add_poly(v[9], {{0.74, 0.36}, {0.62, 0.92}});
    return v;
  }();
  return all[d];
}

double seg_dist2(const Seg& s, double x, double y) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((x - s.x0) * dx + (y - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double px = s.x0 + t * dx - x, py = s.y0 + t * dy - y;
  return px * px + py * py;
}

}  // namespace

LabeledImageSet make_digits(size_t count, uint64_t seed) {
  LabeledImageSet out;
  out.width = 28;
  out.height = 28;
  out.labels.resize(count);
  out.images.assign(count, RealGrid());
  parallel_for(count, [&](size_t i) {
    Rng rng = Rng::for_index(seed, i);
    const int d = int(i % 10);
    const double s = rng.uniform(0.80, 1.05);
    const double aspect = rng.uniform(0.90, 1.10);
    const double rot = rng.uniform(-0.12, 0.12);
    const double slant = rng.uniform(-0.22, 0.22);
    const double tx = rng.uniform(-1.5, 1.5), ty = rng.uniform(-1.5, 1.5);
    const double thick = rng.uniform(0.9, 1.5);

    const double cr = std::cos(rot), sr = std::sin(rot);
    auto map = [&](double u, double v, double& px, double& py) {
      double x = (u - 0.5) - slant * (v - 0.5);
      const double y = v - 0.5;
      const double xr = x * cr - y * sr, yr = x * sr + y * cr;
      px = 13.5 + xr * 18.0 * s * aspect + tx;
      py = 13.5 + yr * 20.0 * s / aspect + ty;
    };

    std::vector<Seg> segs;
    for (const Seg& g : digit_strokes(d)) {
      Seg m;
      map(g.x0, g.y0, m.x0, m.y0);
      map(g.x1, g.y1, m.x1, m.y1);
      segs.push_back(m);
    }

    RealGrid img(28, 28);
    for (int r = 0; r < 28; ++r)
      for (int c = 0; c < 28; ++c) {
        double d2 = 1e9;
        for (const Seg& g : segs) d2 = std::min(d2, seg_dist2(g, c, r));
        const double v = (thick + 0.8 - std::sqrt(d2)) / 0.8;
        img(r, c) = quantize01(v);
      }
    out.images[i] = std::move(img);
    out.labels[i] = d;
  });
  return out;
}

void write_manifest(const std::string& path, const std::string& kind, uint64_t seed, double lo,
                    double hi, const LabeledImageSet& set) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f << "kind = " << kind << "\n"
    << "seed = " << seed << "\n"
    << "range_lo = " << lo << "\n"
    << "range_hi = " << hi << "\n"
    << "count = " << set.count() << "\n"
    << "width = " << set.width << "\n"
    << "height = " << set.height << "\n";
}

}  // namespace scalesteer
