#include "cseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cseg {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Border { Clamp, Reflect };

double fold(double c, int n, Border border) {
  if (n == 1) return 0.0;
  const double hi = n - 1;
  if (border == Border::Clamp) return std::clamp(c, 0.0, hi);
  const double period = 2.0 * hi;
  double m = std::fmod(c, period);
  if (m < 0) m += period;
  return m <= hi ? m : period - m;
}

float sample_linear(const Volume3& vol, const Vec3& q, Border border) {
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const int n = vol.dims()[a];
    const double c = fold(q[a], n, border);
    i0[a] = std::min(static_cast<int>(std::floor(c)), std::max(n - 2, 0));
    t[a] = c - i0[a];
  }
  auto at = [&](int dx, int dy, int dz) {
    const int x = std::min(i0[0] + dx, vol.nx() - 1);
    const int y = std::min(i0[1] + dy, vol.ny() - 1);
    const int z = std::min(i0[2] + dz, vol.nz() - 1);
    return static_cast<double>(vol(x, y, z));
  };
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? t[0] : 1 - t[0]) * (dy ? t[1] : 1 - t[1]) * (dz ? t[2] : 1 - t[2]);
        if (w != 0.0) acc += w * at(dx, dy, dz);
      }
  return static_cast<float>(acc);
}

/// Nearest voxel of q, or `outside` when it falls off the grid.
template <class G>
typename G::value_type sample_nearest(const G& g, const Vec3& q, typename G::value_type outside) {
  const int x = static_cast<int>(std::lround(q[0]));
  const int y = static_cast<int>(std::lround(q[1]));
  const int z = static_cast<int>(std::lround(q[2]));
  return g.contains(x, y, z) ? g(x, y, z) : outside;
}

int node_count(int extent, int spacing) {
  return std::max(2, (extent - 1 + spacing - 1) / spacing + 1);
}

}  // namespace

Rng stream_rng(std::uint64_t base_seed, std::uint64_t index) {
  return Rng(splitmix(splitmix(base_seed) ^ (index * 0xd1342543de82ef95ULL + 1)));
}

Vec3 DeformationField::at(double x, double y, double z) const {
  const double c[3] = {x, y, z};
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const double u = std::clamp(c[a] / grid_spacing, 0.0, static_cast<double>(nodes[a] - 1));
    i0[a] = std::min(static_cast<int>(std::floor(u)), nodes[a] - 2);
    t[a] = u - i0[a];
  }
  Vec3 out{0.0, 0.0, 0.0};
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? t[0] : 1 - t[0]) * (dy ? t[1] : 1 - t[1]) * (dz ? t[2] : 1 - t[2]);
        if (w == 0.0) continue;
        const std::size_t n = static_cast<std::size_t>(i0[0] + dx) +
                              static_cast<std::size_t>(nodes[0]) * (i0[1] + dy + static_cast<std::size_t>(nodes[1]) * (i0[2] + dz));
        for (int a = 0; a < 3; ++a) out[a] += w * displacement[n][a];
      }
  return out;
}

double DeformationField::max_abs_component() const {
  double m = 0.0;
  for (const Vec3& d : displacement)
    for (double v : d) m = std::max(m, std::abs(v));
  return m;
}

DeformationField identity_field(const Dims3& dims, int grid_spacing) {
  DeformationField f;
  f.grid_spacing = std::max(grid_spacing, 1);
  for (int a = 0; a < 3; ++a) f.nodes[a] = node_count(dims[a], f.grid_spacing);
  f.displacement.assign(voxel_count(f.nodes), Vec3{0.0, 0.0, 0.0});
  return f;
}

DeformationField sample_deformation(Rng& rng, const AugmentConfig& config, const Dims3& dims) {
  DeformationField f = identity_field(dims, config.grid_spacing);
  if (config.max_disp <= 0.0) return f;
  if (config.law == DisplacementLaw::Uniform) {
    std::uniform_real_distribution<double> u(-config.max_disp, config.max_disp);
    for (Vec3& d : f.displacement)
      for (double& v : d) v = u(rng);
  } else {
    std::normal_distribution<double> g(0.0, config.max_disp);
    for (Vec3& d : f.displacement)
      for (double& v : d) v = g(rng);
  }
  return f;
}

RigidTransform sample_rigid(Rng& rng, const AugmentConfig& config) {
  RigidTransform r;
  if (config.rotation_deg > 0.0)
    r.angle_deg = std::uniform_real_distribution<double>(-config.rotation_deg, config.rotation_deg)(rng);
  if (config.translation > 0.0) {
    std::uniform_real_distribution<double> u(-config.translation, config.translation);
    for (double& v : r.translation) v = u(rng);
  }
  return r;
}

Vec3 source_coordinate(const Vec3& p, const Vec3& field_disp, const RigidTransform& rigid, const Vec3& centre) {
  const double th = rigid.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double dx = p[0] + field_disp[0] - centre[0];
  const double dy = p[1] + field_disp[1] - centre[1];
  const double dz = p[2] + field_disp[2] - centre[2];
  return {c * dx - s * dy + centre[0] - rigid.translation[0],
          s * dx + c * dy + centre[1] - rigid.translation[1],
          dz + centre[2] - rigid.translation[2]};
}

std::pair<Volume3, LabelVolume> apply_transform(const Volume3& vol, const LabelVolume& labels,
                                                const DeformationField& field, const RigidTransform& rigid) {
  if (!same_geometry(vol, labels))
    throw ShapeError("apply_transform: image " + to_string(vol.dims()) + " vs labels " + to_string(labels.dims()));
  const Vec3 centre{(vol.nx() - 1) / 2.0, (vol.ny() - 1) / 2.0, (vol.nz() - 1) / 2.0};
  Volume3 out_img(vol.dims(), vol.spacing());
  LabelVolume out_lab(labels.dims(), labels.spacing());
  for (int z = 0; z < vol.nz(); ++z)
    for (int y = 0; y < vol.ny(); ++y)
      for (int x = 0; x < vol.nx(); ++x) {
        const Vec3 q = source_coordinate({double(x), double(y), double(z)}, field.at(x, y, z), rigid, centre);
        out_img(x, y, z) = sample_linear(vol, q, Border::Clamp);
        out_lab(x, y, z) = sample_nearest(labels, q, Label{0});
      }
  return {std::move(out_img), std::move(out_lab)};
}

std::vector<std::uint32_t> true_voxels(const BinaryMask& mask) {
  std::vector<std::uint32_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<std::uint32_t>(i));
  return idx;
}

SubvolumeSample sample_subvolume(const Volume3& vol, const LabelVolume& labels, const BinaryMask& candidate,
                                 const NetworkConfig& net, Rng& rng, const AugmentConfig& augment,
                                 const std::vector<std::uint32_t>* candidate_voxels) {
  if (!same_geometry(vol, labels) || !same_geometry(vol, candidate))
    throw ShapeError("sample_subvolume: image " + to_string(vol.dims()) + ", labels " + to_string(labels.dims()) +
                     ", candidate " + to_string(candidate.dims()));
  std::vector<std::uint32_t> local;
  if (!candidate_voxels) {
    local = true_voxels(candidate);
    candidate_voxels = &local;
  }
  if (candidate_voxels->empty()) throw EmptyRegion("sample_subvolume: candidate region is empty");

  const Dims3 out = output_shape(net);
  const Dims3& in = net.input_tile;
  const std::size_t pick =
      std::uniform_int_distribution<std::size_t>(0, candidate_voxels->size() - 1)(rng);
  const std::size_t lin = (*candidate_voxels)[pick];
  const int nx = vol.nx(), ny = vol.ny();
  SubvolumeSample s;
  s.centre = {static_cast<int>(lin % nx), static_cast<int>((lin / nx) % ny), static_cast<int>(lin / (std::size_t(nx) * ny))};
  Dims3 margin, in_origin;
  for (int a = 0; a < 3; ++a) {
    margin[a] = (in[a] - out[a]) / 2;
    s.output_origin[a] = s.centre[a] - out[a] / 2;
    in_origin[a] = s.output_origin[a] - margin[a];
  }

  if (!augment.enabled) {
    s.input = crop_reflected(vol, in_origin, in);
    s.labels = crop_constant(labels, s.output_origin, out, Label{0});
    s.mask = crop_constant(candidate, s.output_origin, out, std::uint8_t{0});
    return s;
  }

  const DeformationField field = sample_deformation(rng, augment, in);
  const RigidTransform rigid = sample_rigid(rng, augment);
  const Vec3 centre{double(s.centre[0]), double(s.centre[1]), double(s.centre[2])};

  s.input = Volume3(in, vol.spacing());
  for (int z = 0; z < in[2]; ++z)
    for (int y = 0; y < in[1]; ++y)
      for (int x = 0; x < in[0]; ++x) {
        const Vec3 p{double(in_origin[0] + x), double(in_origin[1] + y), double(in_origin[2] + z)};
        s.input(x, y, z) = sample_linear(vol, source_coordinate(p, field.at(x, y, z), rigid, centre), Border::Reflect);
      }
  s.labels = LabelVolume(out, labels.spacing());
  s.mask = BinaryMask(out, candidate.spacing());
  for (int z = 0; z < out[2]; ++z)
    for (int y = 0; y < out[1]; ++y)
      for (int x = 0; x < out[0]; ++x) {
        const Vec3 p{double(s.output_origin[0] + x), double(s.output_origin[1] + y), double(s.output_origin[2] + z)};
        const Vec3 d = field.at(x + margin[0], y + margin[1], z + margin[2]);
        const Vec3 q = source_coordinate(p, d, rigid, centre);
        s.labels(x, y, z) = sample_nearest(labels, q, Label{0});
        s.mask(x, y, z) = sample_nearest(candidate, q, std::uint8_t{0});
      }
  return s;
}

}  // namespace cseg
