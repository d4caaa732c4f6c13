#pragma once

#include <string>
#include <vector>

#include "cseg/volume.hpp"

namespace cseg {

/// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

struct RecallFpr {
  double recall = 0.0;
  double fpr = 0.0;
};

/// recall = |gt_k n C| / |gt_k|, fpr = |C \ gt_k| / |V \ gt_k|.
/// Throws ClassAbsent when class k has no ground-truth voxel.
RecallFpr recall_fpr(const BinaryMask& candidate, const LabelVolume& gt, Label k);

/// recall_fpr with the candidate taken as the predicted voxels of class k.
RecallFpr sensitivity_fpr(const LabelVolume& pred, const LabelVolume& gt, Label k);

struct ClassColumn {
  Label label;
  std::string name;
};

struct EvalCase {
  const LabelVolume* pred;
  const LabelVolume* gt;
};

struct SummaryRow {
  std::string name;             // Mean, Std, Median, Min, Max
  std::vector<double> values;   // one per class
  double across_classes = 0.0;  // mean of `values`
};

struct DiceReport {
  std::vector<ClassColumn> classes;
  std::vector<std::vector<double>> per_case;     // [case][class]
  std::vector<std::vector<bool>> both_empty;     // Dice defaulted to 1.0
  std::vector<SummaryRow> summary;

  /// Mean Dice over classes and cases.
  double overall_mean() const;
  const SummaryRow& row(const std::string& name) const;

  /// Header "Dice<TAB>class...<TAB>Mean", one row per case ("case<i>"), then
  /// the Mean/Std/Median/Min/Max rows. Values are fractions with six
  /// decimals. Flagged entries are listed in trailing '#' lines.
  std::string to_tsv() const;
};

/// One-vs-rest Dice per class and case with population standard deviation.
DiceReport dice_table(const std::vector<EvalCase>& cases, const std::vector<ClassColumn>& classes);

}  // namespace cseg
