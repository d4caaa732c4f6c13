#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cseg/errors.hpp"

namespace cseg {

/// (batch, channel, depth, height, width); width is the fastest axis and maps
/// to the volume x axis, height to y, depth to z.
using Shape5 = std::array<int, 5>;

std::string to_string(const Shape5& s);

inline std::size_t element_count(const Shape5& s) {
  std::size_t n = 1;
  for (int v : s) n *= static_cast<std::size_t>(v);
  return n;
}

/// Dense 5-axis tensor with an optional gradient buffer of the same length.
template <class T>
struct Tensor5 {
  Shape5 shape{0, 0, 0, 0, 0};
  std::vector<T> values;
  std::vector<T> grad;  // empty when no gradient is attached

  Tensor5() = default;
  explicit Tensor5(const Shape5& s, T fill = T{}) : shape(s) {
    for (int v : s)
      if (v <= 0) throw ShapeError("Tensor5: non-positive extent in " + to_string(s));
    values.assign(element_count(s), fill);
  }

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int d() const { return shape[2]; }
  int h() const { return shape[3]; }
  int w() const { return shape[4]; }
  std::size_t size() const { return values.size(); }
  std::size_t spatial() const { return static_cast<std::size_t>(shape[2]) * shape[3] * shape[4]; }

  std::size_t offset(int in, int ic, int z, int y, int x) const {
    return (((static_cast<std::size_t>(in) * shape[1] + ic) * shape[2] + z) * shape[3] + y) *
               shape[4] + x;
  }
  T& at(int in, int ic, int z, int y, int x) { return values[offset(in, ic, z, y, x)]; }
  const T& at(int in, int ic, int z, int y, int x) const { return values[offset(in, ic, z, y, x)]; }

  bool has_grad() const { return grad.size() == values.size() && !values.empty(); }
  void zero_grad() { grad.assign(values.size(), T{}); }
};

template <class To, class From>
Tensor5<To> tensor_cast(const Tensor5<From>& t) {
  Tensor5<To> out;
  out.shape = t.shape;
  out.values.assign(t.values.begin(), t.values.end());
  if (t.has_grad()) out.grad.assign(t.grad.begin(), t.grad.end());
  return out;
}

}  // namespace cseg
