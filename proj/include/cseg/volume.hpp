#pragma once

// Volumetric grids and the binary morphology used for candidate regions.
//
// All grids store voxels x-fastest: index = x + nx * (y + ny * z).

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cseg/errors.hpp"

namespace cseg {

using Dims3 = std::array<int, 3>;
using Spacing3 = std::array<double, 3>;
using Label = std::uint8_t;

inline std::size_t voxel_count(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * d[1] * d[2];
}

std::string to_string(const Dims3& d);

struct ImageTag {};
struct LabelTag {};
struct MaskTag {};

/// Dense 3D grid with physical spacing (mm per voxel). `Kind` only tags the
/// semantic role so images, label maps and masks cannot be mixed up.
template <class T, class Kind>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(Dims3 dims, Spacing3 spacing = {1.0, 1.0, 1.0}, T fill = T{})
      : dims_(dims), spacing_(spacing) {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] <= 0)
        throw DegenerateVolume("Grid: non-positive dimension in " + to_string(dims));
      if (!(spacing[a] > 0.0))
        throw DegenerateVolume("Grid: spacing must be strictly positive");
    }
    data_.assign(voxel_count(dims), fill);
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  void set_spacing(const Spacing3& s) { spacing_ = s; }
  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_[1]) * z);
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_[0] && y < dims_[1] && z < dims_[2];
  }

  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid& o) const = default;

 private:
  Dims3 dims_{0, 0, 0};
  Spacing3 spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_;
};

using Volume3 = Grid<float, ImageTag>;
using LabelVolume = Grid<Label, LabelTag>;
/// Boolean grid; stored as bytes holding 0 or 1.
using BinaryMask = Grid<std::uint8_t, MaskTag>;

template <class A, class B>
bool same_geometry(const A& a, const B& b) {
  return a.dims() == b.dims();
}

std::size_t count_true(const BinaryMask& m);

enum class Interp { Linear, Nearest };

/// Factor-2 downsampling: linear averages each 2x2x2 block, nearest keeps
/// the block's (0,0,0) corner. Odd trailing planes are dropped.
Volume3 resample_down2(const Volume3& vol, Interp mode);
LabelVolume resample_down2(const LabelVolume& labels, Interp mode = Interp::Nearest);
BinaryMask resample_down2(const BinaryMask& mask);

/// Integer-factor upsampling to `target`, factor = target / dims per axis.
/// Sample positions are voxel-center aligned; voxels past factor*dims clamp
/// to the last source plane. Label volumes accept nearest mode only.
Volume3 upsample(const Volume3& vol, const Dims3& target, Interp mode);
LabelVolume upsample(const LabelVolume& labels, const Dims3& target, Interp mode = Interp::Nearest);
BinaryMask upsample(const BinaryMask& mask, const Dims3& target);

BinaryMask threshold(const Volume3& vol, float t);

/// Clamps to [low, high] and maps linearly onto [-1, 1].
Volume3 apply_window(const Volume3& vol, float low, float high);

/// Background components (6-connected) that do not touch the border become
/// foreground.
BinaryMask fill_holes_3d(const BinaryMask& mask);

/// Keeps the 6-connected component with the most voxels. Ties go to the
/// component whose first voxel in scan order comes first.
BinaryMask largest_component(const BinaryMask& mask);

/// Euclidean ball dilation, radius in voxels.
BinaryMask dilate_ball(const BinaryMask& mask, int radius);

/// Integer offsets of the Euclidean ball of the given radius.
std::vector<std::array<int, 3>> ball_offsets(int radius);

struct PadMargins {
  Dims3 low{0, 0, 0};
  Dims3 high{0, 0, 0};
};

/// Reflects index `i` into [0, n) without repeating the edge voxel.
/// Folds repeatedly for offsets larger than n - 1.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

/// Mirror padding; every margin must be smaller than the axis length.
Volume3 mirror_pad(const Volume3& vol, const PadMargins& margins);

/// Extracts the box [origin, origin + size) with reflected indexing outside
/// the volume.
Volume3 crop_reflected(const Volume3& vol, const Dims3& origin, const Dims3& size);

/// Extracts the box with out-of-range voxels set to `outside`.
template <class T, class K>
Grid<T, K> crop_constant(const Grid<T, K>& g, const Dims3& origin, const Dims3& size, T outside) {
  Grid<T, K> out(size, g.spacing(), outside);
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y)
      for (int x = 0; x < size[0]; ++x) {
        const int sx = origin[0] + x, sy = origin[1] + y, sz = origin[2] + z;
        if (g.contains(sx, sy, sz)) out(x, y, z) = g(sx, sy, sz);
      }
  return out;
}

/// Mask of voxels whose label is >= `first_label`.
BinaryMask labels_at_least(const LabelVolume& labels, Label first_label);
BinaryMask labels_equal(const LabelVolume& labels, Label k);

}  // namespace cseg
