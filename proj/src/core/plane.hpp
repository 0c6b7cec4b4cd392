#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace afw {

// Dense H x W grid, row-major. Used for masks (uint8_t, 0/1) and real-valued
// planes (double).
template <typename T>
struct Plane {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Plane() = default;
  Plane(int r, int c, T fill = T{}) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  T& at(int y, int x) { return v[static_cast<size_t>(y) * cols + x]; }
  const T& at(int y, int x) const { return v[static_cast<size_t>(y) * cols + x]; }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  bool in_bounds(int y, int x) const { return y >= 0 && y < rows && x >= 0 && x < cols; }
  bool same_shape(int r, int c) const { return rows == r && cols == c; }

  template <typename U>
  bool same_shape(const Plane<U>& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool operator==(const Plane& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

using MaskPlane = Plane<uint8_t>;
using RealPlane = Plane<double>;

template <typename A, typename B>
inline void require_same_shape(const Plane<A>& a, const Plane<B>& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ContractError("plane shape mismatch: " + std::to_string(a.rows) + "x" +
                        std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                        std::to_string(b.cols));
  }
}

inline size_t mask_area(const MaskPlane& m) {
  size_t n = 0;
  for (uint8_t b : m.v) n += (b != 0);
  return n;
}

inline RealPlane to_real(const MaskPlane& m) {
  RealPlane r(m.rows, m.cols);
  for (size_t i = 0; i < m.v.size(); ++i) r.v[i] = m.v[i] ? 1.0 : 0.0;
  return r;
}

// Interleaved RGB, 8-bit, row-major.
struct ImageRGB {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> v;  // rows*cols*3

  ImageRGB() = default;
  ImageRGB(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c * 3, 0) {}

  uint8_t* px(int y, int x) { return v.data() + (static_cast<size_t>(y) * cols + x) * 3; }
  const uint8_t* px(int y, int x) const { return v.data() + (static_cast<size_t>(y) * cols + x) * 3; }

  bool operator==(const ImageRGB& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

}  // namespace afw
