#include "cseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace cseg {

std::string to_string(const Dims3& d) {
  std::ostringstream os;
  os << d[0] << "x" << d[1] << "x" << d[2];
  return os.str();
}

std::size_t count_true(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

namespace {

Dims3 half_dims(const Dims3& d, const char* op) {
  for (int a = 0; a < 3; ++a)
    if (d[a] < 2)
      throw DegenerateVolume(std::string(op) + ": every dimension must be >= 2, got " +
                             to_string(d));
  return {d[0] / 2, d[1] / 2, d[2] / 2};
}

Spacing3 doubled(const Spacing3& s) { return {2 * s[0], 2 * s[1], 2 * s[2]}; }

template <class G>
G down2_corner(const G& in) {
  const Dims3 od = half_dims(in.dims(), "resample_down2");
  G out(od, doubled(in.spacing()));
  for (int z = 0; z < od[2]; ++z)
    for (int y = 0; y < od[1]; ++y)
      for (int x = 0; x < od[0]; ++x) out(x, y, z) = in(2 * x, 2 * y, 2 * z);
  return out;
}

Dims3 up_factors(const Dims3& src, const Dims3& target) {
  Dims3 f{};
  for (int a = 0; a < 3; ++a) {
    if (target[a] < src[a])
      throw GeometryError("upsample: target " + to_string(target) + " smaller than source " +
                          to_string(src));
    f[a] = target[a] / src[a];
  }
  return f;
}

Spacing3 divided(const Spacing3& s, const Dims3& f) {
  return {s[0] / f[0], s[1] / f[1], s[2] / f[2]};
}

template <class G>
G up_nearest(const G& in, const Dims3& target) {
  const Dims3 f = up_factors(in.dims(), target);
  G out(target, divided(in.spacing(), f));
  const Dims3& sd = in.dims();
  for (int z = 0; z < target[2]; ++z) {
    const int sz = std::min(z / f[2], sd[2] - 1);
    for (int y = 0; y < target[1]; ++y) {
      const int sy = std::min(y / f[1], sd[1] - 1);
      for (int x = 0; x < target[0]; ++x) out(x, y, z) = in(std::min(x / f[0], sd[0] - 1), sy, sz);
    }
  }
  return out;
}

struct LerpTap {
  int i0, i1;
  double t;
};

std::vector<LerpTap> lerp_taps(int n_src, int n_dst, int factor) {
  std::vector<LerpTap> taps(n_dst);
  for (int i = 0; i < n_dst; ++i) {
    double p = (i + 0.5) / factor - 0.5;
    p = std::clamp(p, 0.0, static_cast<double>(n_src - 1));
    const int i0 = static_cast<int>(std::floor(p));
    taps[i] = {i0, std::min(i0 + 1, n_src - 1), p - i0};
  }
  return taps;
}

// Breadth-first flood over 6-neighbours from the seeds, restricted to voxels
// where `passable` is nonzero. Marks visited voxels in `seen`.
template <class Pred>
std::size_t flood6(const Dims3& d, std::deque<std::size_t>& queue, std::vector<std::uint8_t>& seen,
                   Pred passable, std::vector<std::size_t>* members = nullptr) {
  const std::size_t sx = 1, sy = static_cast<std::size_t>(d[0]),
                    sz = static_cast<std::size_t>(d[0]) * d[1];
  std::size_t visited = 0;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    ++visited;
    if (members) members->push_back(i);
    const int x = static_cast<int>(i % sy);
    const int y = static_cast<int>((i / sy) % d[1]);
    const int z = static_cast<int>(i / sz);
    auto visit = [&](bool ok, std::size_t j) {
      if (ok && !seen[j] && passable(j)) {
        seen[j] = 1;
        queue.push_back(j);
      }
    };
    visit(x > 0, i - sx);
    visit(x + 1 < d[0], i + sx);
    visit(y > 0, i - sy);
    visit(y + 1 < d[1], i + sy);
    visit(z > 0, i - sz);
    visit(z + 1 < d[2], i + sz);
  }
  return visited;
}

}  // namespace

Volume3 resample_down2(const Volume3& vol, Interp mode) {
  if (mode == Interp::Nearest) return down2_corner(vol);
  const Dims3 od = half_dims(vol.dims(), "resample_down2");
  Volume3 out(od, doubled(vol.spacing()));
  for (int z = 0; z < od[2]; ++z)
    for (int y = 0; y < od[1]; ++y)
      for (int x = 0; x < od[0]; ++x) {
        double s = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a) s += vol(2 * x + a, 2 * y + b, 2 * z + c);
        out(x, y, z) = static_cast<float>(s / 8.0);
      }
  return out;
}

LabelVolume resample_down2(const LabelVolume& labels, Interp mode) {
  if (mode != Interp::Nearest)
    throw InvalidMode("resample_down2: label volumes support nearest mode only");
  return down2_corner(labels);
}

BinaryMask resample_down2(const BinaryMask& mask) { return down2_corner(mask); }

Volume3 upsample(const Volume3& vol, const Dims3& target, Interp mode) {
  if (mode == Interp::Nearest) return up_nearest(vol, target);
  const Dims3 f = up_factors(vol.dims(), target);
  const Dims3& sd = vol.dims();
  const auto tx = lerp_taps(sd[0], target[0], f[0]);
  const auto ty = lerp_taps(sd[1], target[1], f[1]);
  const auto tz = lerp_taps(sd[2], target[2], f[2]);
  Volume3 out(target, divided(vol.spacing(), f));
  for (int z = 0; z < target[2]; ++z)
    for (int y = 0; y < target[1]; ++y)
      for (int x = 0; x < target[0]; ++x) {
        const LerpTap &a = tx[x], &b = ty[y], &c = tz[z];
        auto row = [&](int yy, int zz) {
          return (1.0 - a.t) * vol(a.i0, yy, zz) + a.t * vol(a.i1, yy, zz);
        };
        auto plane = [&](int zz) { return (1.0 - b.t) * row(b.i0, zz) + b.t * row(b.i1, zz); };
        out(x, y, z) = static_cast<float>((1.0 - c.t) * plane(c.i0) + c.t * plane(c.i1));
      }
  return out;
}

LabelVolume upsample(const LabelVolume& labels, const Dims3& target, Interp mode) {
  if (mode != Interp::Nearest)
    throw InvalidMode("upsample: linear interpolation is undefined for label volumes");
  return up_nearest(labels, target);
}

BinaryMask upsample(const BinaryMask& mask, const Dims3& target) { return up_nearest(mask, target); }

BinaryMask threshold(const Volume3& vol, float t) {
  BinaryMask m(vol.dims(), vol.spacing());
  for (std::size_t i = 0; i < vol.size(); ++i) m[i] = vol[i] >= t ? 1 : 0;
  return m;
}

Volume3 apply_window(const Volume3& vol, float low, float high) {
  if (!(high > low)) throw InvalidMode("apply_window: empty window");
  Volume3 out(vol.dims(), vol.spacing());
  const float width = high - low;
  for (std::size_t i = 0; i < vol.size(); ++i) out[i] = 2.0f * (std::clamp(vol[i], low, high) - low) / width - 1.0f;
  return out;
}

BinaryMask fill_holes_3d(const BinaryMask& mask) {
  const Dims3& d = mask.dims();
  std::vector<std::uint8_t> outside(mask.size(), 0);
  std::deque<std::size_t> queue;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const bool border = x == 0 || y == 0 || z == 0 || x == d[0] - 1 || y == d[1] - 1 ||
                            z == d[2] - 1;
        const std::size_t i = mask.index(x, y, z);
        if (border && !mask[i]) {
          outside[i] = 1;
          queue.push_back(i);
        }
      }
  flood6(d, queue, outside, [&](std::size_t j) { return mask[j] == 0; });
  BinaryMask out(d, mask.spacing());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = outside[i] ? 0 : 1;
  return out;
}

BinaryMask largest_component(const BinaryMask& mask) {
  const Dims3& d = mask.dims();
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<std::size_t> best, current;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i] || seen[i]) continue;
    current.clear();
    seen[i] = 1;
    queue.push_back(i);
    flood6(d, queue, seen, [&](std::size_t j) { return mask[j] != 0; }, &current);
    if (current.size() > best.size()) best.swap(current);
  }
  if (best.empty()) throw NoForeground("largest_component: mask has no foreground voxel");
  BinaryMask out(d, mask.spacing());
  for (std::size_t i : best) out[i] = 1;
  return out;
}

std::vector<std::array<int, 3>> ball_offsets(int radius) {
  std::vector<std::array<int, 3>> offs;
  const int r2 = radius * radius;
  for (int c = -radius; c <= radius; ++c)
    for (int b = -radius; b <= radius; ++b)
      for (int a = -radius; a <= radius; ++a)
        if (a * a + b * b + c * c <= r2) offs.push_back({a, b, c});
  return offs;
}

BinaryMask dilate_ball(const BinaryMask& mask, int radius) {
  if (radius < 0) throw GeometryError("dilate_ball: negative radius");
  BinaryMask out = mask;
  if (radius == 0) return out;
  const auto offs = ball_offsets(radius);
  const Dims3& d = mask.dims();
  // Stamping only voxels with a background 6-neighbour is exact: any voxel
  // within reach of an interior voxel is also within reach of a boundary one
  // (walk from the interior voxel toward it through foreground).
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (!mask(x, y, z)) continue;
        const bool interior = (x == 0 || mask(x - 1, y, z)) && (x + 1 == d[0] || mask(x + 1, y, z)) &&
                              (y == 0 || mask(x, y - 1, z)) && (y + 1 == d[1] || mask(x, y + 1, z)) &&
                              (z == 0 || mask(x, y, z - 1)) && (z + 1 == d[2] || mask(x, y, z + 1));
        if (interior) continue;
        for (const auto& o : offs) {
          const int px = x + o[0], py = y + o[1], pz = z + o[2];
          if (mask.contains(px, py, pz)) out(px, py, pz) = 1;
        }
      }
  return out;
}

Volume3 mirror_pad(const Volume3& vol, const PadMargins& m) {
  Dims3 od{};
  for (int a = 0; a < 3; ++a) {
    if (m.low[a] < 0 || m.high[a] < 0)
      throw PadTooLarge("mirror_pad: negative margin on axis " + std::to_string(a));
    if (m.low[a] >= vol.dims()[a] || m.high[a] >= vol.dims()[a])
      throw PadTooLarge("mirror_pad: margin on axis " + std::to_string(a) +
                        " must be smaller than the dimension " + std::to_string(vol.dims()[a]));
    od[a] = vol.dims()[a] + m.low[a] + m.high[a];
  }
  Volume3 out = crop_reflected(vol, {-m.low[0], -m.low[1], -m.low[2]}, od);
  return out;
}

Volume3 crop_reflected(const Volume3& vol, const Dims3& origin, const Dims3& size) {
  Volume3 out(size, vol.spacing());
  const Dims3& d = vol.dims();
  std::vector<int> ix(size[0]);
  for (int x = 0; x < size[0]; ++x) ix[x] = reflect_index(origin[0] + x, d[0]);
  for (int z = 0; z < size[2]; ++z) {
    const int sz = reflect_index(origin[2] + z, d[2]);
    for (int y = 0; y < size[1]; ++y) {
      const int sy = reflect_index(origin[1] + y, d[1]);
      const float* src = &vol.data()[vol.index(0, sy, sz)];
      float* dst = &out.data()[out.index(0, y, z)];
      for (int x = 0; x < size[0]; ++x) dst[x] = src[ix[x]];
    }
  }
  return out;
}

BinaryMask labels_at_least(const LabelVolume& labels, Label first_label) {
  BinaryMask m(labels.dims(), labels.spacing());
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] >= first_label ? 1 : 0;
  return m;
}

BinaryMask labels_equal(const LabelVolume& labels, Label k) {
  BinaryMask m(labels.dims(), labels.spacing());
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == k ? 1 : 0;
  return m;
}

}  // namespace cseg
