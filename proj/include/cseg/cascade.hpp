#pragma once

#include <string>
#include <vector>

#include "cseg/metrics.hpp"
#include "cseg/volume.hpp"

namespace cseg {

struct CascadeConfig {
  float body_threshold = -200.0f;  // HU
  /// Intensity window mapped onto [-1, 1] before the network sees a volume.
  float window_low = -160.0f;
  float window_high = 240.0f;
  int dilation_radius = 3;         // voxels
  int stage = 1;
  /// Labels >= this value count as foreground when forming the second-stage
  /// region. 1 treats every non-zero label as foreground.
  Label min_foreground_label = 1;
  /// Derive the second-stage training region from ground truth instead of
  /// first-stage predictions (ablation only).
  bool region_from_ground_truth = false;
};

struct CandidateRegion {
  BinaryMask mask;
  double voxel_fraction = 0.0;
};

CandidateRegion make_region(BinaryMask mask);

/// Threshold, keep the largest 6-connected component, fill enclosed holes.
/// Throws NoForeground when no voxel reaches the threshold.
CandidateRegion body_mask(const Volume3& ct, const CascadeConfig& config);

/// Dilation of the predicted foreground by a ball of radius r.
CandidateRegion candidate_from_prediction(const LabelVolume& pred, int radius, Label min_foreground_label = 1);

struct CurveRow {
  int radius;
  Label label;
  RecallFpr value;
};

struct RadiusCurve {
  std::vector<CurveRow> rows;
  /// Header "r<TAB>class<TAB>recall<TAB>fpr", one line per (r, class).
  std::string to_tsv() const;
};

/// recall_fpr of each listed class against candidate_from_prediction(pred, r)
/// for r = 0..r_max.
RadiusCurve radius_curve(const LabelVolume& pred, const LabelVolume& gt, int r_max,
                         const std::vector<Label>& classes, Label min_foreground_label = 1);

}  // namespace cseg
