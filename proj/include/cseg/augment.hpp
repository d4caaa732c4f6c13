#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cseg/unet.hpp"
#include "cseg/volume.hpp"

namespace cseg {

using Rng = std::mt19937_64;

/// Generator for sample `index` of a stream seeded with `base_seed`.
/// Streams for different indices are independent of production order.
Rng stream_rng(std::uint64_t base_seed, std::uint64_t index);

enum class DisplacementLaw { Uniform, Normal };

struct AugmentConfig {
  bool enabled = true;
  DisplacementLaw law = DisplacementLaw::Uniform;
  double max_disp = 4.0;        // uniform half-width, or the standard deviation for Normal
  int grid_spacing = 32;        // control-node spacing in voxels
  double rotation_deg = 5.0;    // rotation about z drawn from [-r, r]
  double translation = 20.0;    // per-axis shift drawn from [-t, t] voxels
};

using Vec3 = std::array<double, 3>;

/// Displacements on a regular control grid, trilinearly interpolated.
struct DeformationField {
  int grid_spacing = 32;
  Dims3 nodes{2, 2, 2};
  std::vector<Vec3> displacement;  // x-fastest over nodes

  /// Dense displacement at voxel coordinate (x, y, z).
  Vec3 at(double x, double y, double z) const;
  double max_abs_component() const;
};

DeformationField identity_field(const Dims3& dims, int grid_spacing);
DeformationField sample_deformation(Rng& rng, const AugmentConfig& config, const Dims3& dims);

struct RigidTransform {
  double angle_deg = 0.0;  // about z
  Vec3 translation{0.0, 0.0, 0.0};
};

RigidTransform sample_rigid(Rng& rng, const AugmentConfig& config);

/// Source coordinate sampled for output voxel p:
///   q = R(angle) * (p + d(p) - centre) + centre - translation
/// so a positive translation moves content toward larger coordinates.
Vec3 source_coordinate(const Vec3& p, const Vec3& field_disp, const RigidTransform& rigid, const Vec3& centre);

/// Backward warp of a whole volume about its centre. The image is
/// interpolated trilinearly with clamped (border-value) coordinates; labels
/// use nearest neighbour and become background outside the volume.
std::pair<Volume3, LabelVolume> apply_transform(const Volume3& vol, const LabelVolume& labels,
                                                const DeformationField& field, const RigidTransform& rigid);

struct SubvolumeSample {
  Volume3 input;        // network input tile
  LabelVolume labels;   // output-region labels
  BinaryMask mask;      // output-region candidate mask (loss support)
  Dims3 centre{};       // sampled candidate voxel
  Dims3 output_origin{};
};

/// Draws a candidate voxel uniformly and extracts the tile whose output
/// region is centred on it. The input region is mirror-extended past the
/// volume; output-region voxels outside the volume get label 0 and mask 0.
/// With augmentation enabled, a deformation and rigid transform about the
/// sampled voxel are applied to all three tiles.
/// `candidate_voxels` may pass precomputed linear indices of `candidate`.
SubvolumeSample sample_subvolume(const Volume3& vol, const LabelVolume& labels, const BinaryMask& candidate,
                                 const NetworkConfig& net, Rng& rng, const AugmentConfig& augment,
                                 const std::vector<std::uint32_t>* candidate_voxels = nullptr);

std::vector<std::uint32_t> true_voxels(const BinaryMask& mask);

}  // namespace cseg
