#ifndef SCALESTEER_GRID_HPP
#define SCALESTEER_GRID_HPP

#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace scalesteer {

// Dense row-major 2D array. Rows index y (top to bottom), cols index x.
template <typename T>
class Grid {
 public:
  Grid() : rows_(0), cols_(0) {}
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    assert(rows >= 0 && cols >= 0);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  size_t count() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  const T& operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Grid& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  int rows_, cols_;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<std::complex<double>>;

inline double max_abs(const RealGrid& g) {
  double m = 0.0;
  for (size_t i = 0; i < g.size(); ++i) m = std::max(m, std::abs(g[i]));
  return m;
}

inline double max_abs(const ComplexGrid& g) {
  double m = 0.0;
  for (size_t i = 0; i < g.size(); ++i) m = std::max(m, std::abs(g[i]));
  return m;
}

inline double max_abs_diff(const RealGrid& a, const RealGrid& b) {
  assert(a.same_shape(b));
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace scalesteer

#endif  // SCALESTEER_GRID_HPP
