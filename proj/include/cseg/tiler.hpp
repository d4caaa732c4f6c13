#pragma once

#include <string>
#include <vector>

#include "cseg/cascade.hpp"
#include "cseg/unet.hpp"
#include "cseg/volume.hpp"

namespace cseg {

enum class OverlapMode { None, XyHalf };

/// "none" or "xy_half"; anything else throws InvalidMode.
OverlapMode parse_overlap_mode(const std::string& s);
std::string to_string(OverlapMode m);

struct TilePlan {
  Dims3 volume{};
  Dims3 input_tile{};
  Dims3 output_tile{};
  OverlapMode mode = OverlapMode::None;
  std::vector<Dims3> origins;  // output-region origins in volume coordinates
  PadMargins padding;          // extent read past the volume on each face
};

/// Output regions on a grid with stride equal to the output tile, or half
/// of it in x and y for XyHalf. Along each axis origins advance until the
/// region reaches the end of the volume; regions past the far face read
/// mirrored input. Tiles whose output region holds no `restrict` voxel are
/// dropped.
TilePlan plan_tiles(const Dims3& volume, const NetworkConfig& net, OverlapMode mode,
                    const BinaryMask* restrict = nullptr);

/// Per-voxel coverage count of a plan, clipped to the volume.
std::vector<int> coverage_counts(const TilePlan& plan);

struct Prediction {
  std::vector<Volume3> probabilities;  // one field per class
  LabelVolume labels;
};

/// Sums per-tile class probabilities and divides by coverage.
class FusionAccumulator {
 public:
  FusionAccumulator(const Dims3& dims, const Spacing3& spacing, int num_classes);

  /// `probs` has shape (1, K, oz, oy, ox); voxels past the volume are ignored.
  void add(const Dims3& origin, const Tensor5<float>& probs);

  int coverage(int x, int y, int z) const { return coverage_[index(x, y, z)]; }

  /// Averages; voxels outside `restrict` become background with probability
  /// one. Throws ShapeError if a requested voxel was never covered. Labels
  /// are the argmax, ties to the lower class.
  Prediction finalize(const BinaryMask* restrict = nullptr) const;

 private:
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(dims_[0]) * (y + static_cast<std::size_t>(dims_[1]) * z);
  }
  Dims3 dims_;
  Spacing3 spacing_;
  int num_classes_;
  std::vector<double> sums_;  // [class][voxel]
  std::vector<int> coverage_;
};

/// Single-channel input tile at the given output origin, mirror-extended.
Tensor5<float> extract_tile(const Volume3& vol, const Dims3& output_origin, const NetworkConfig& net);

/// Sliding-window inference. Tiles run concurrently, merge order follows
/// the plan, so the result does not depend on scheduling.
Prediction predict_volume(const UNet& net, const Volume3& vol, const TilePlan& plan,
                          const BinaryMask* restrict = nullptr);

struct TwoStageConfig {
  CascadeConfig cascade;
  OverlapMode stage2_mode = OverlapMode::XyHalf;
  bool restrict_stage1_to_body = true;
  bool full_resolution_output = true;
};

struct StageTimings {
  double downsample = 0.0;
  double body = 0.0;
  double stage1 = 0.0;
  double candidate = 0.0;
  double stage2 = 0.0;
  double upsample = 0.0;  // seconds
};

struct CascadeResult {
  LabelVolume labels;                  // final labels (full resolution when requested)
  std::vector<Volume3> probabilities;  // final probabilities
  Volume3 half_ct;
  CandidateRegion body;                // first-stage region, half resolution
  CandidateRegion candidate;           // second-stage region, half resolution
  Prediction stage1;                   // half resolution
  Prediction stage2;                   // half resolution
  StageTimings timings;
  std::vector<std::string> warnings;
};

/// Downsample, body mask, first-stage prediction on non-overlapping tiles,
/// dilated candidate, second-stage prediction inside the candidate, then
/// nearest (labels) and linear (probabilities) upsampling.
CascadeResult two_stage_predict(const UNet& net1, const UNet& net2, const Volume3& ct, const TwoStageConfig& config);

}  // namespace cseg
