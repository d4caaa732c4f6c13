#include "cseg/cascade.hpp"

#include <cstdio>
#include <sstream>

namespace cseg {

CandidateRegion make_region(BinaryMask mask) {
  CandidateRegion r;
  r.voxel_fraction = static_cast<double>(count_true(mask)) / static_cast<double>(mask.size());
  r.mask = std::move(mask);
  return r;
}

CandidateRegion body_mask(const Volume3& ct, const CascadeConfig& config) {
  const BinaryMask above = threshold(ct, config.body_threshold);
  if (count_true(above) == 0)
    throw NoForeground("body_mask: no voxel at or above " + std::to_string(config.body_threshold) + " HU");
  return make_region(fill_holes_3d(largest_component(above)));
}

CandidateRegion candidate_from_prediction(const LabelVolume& pred, int radius, Label min_foreground_label) {
  if (radius < 0) throw GeometryError("candidate_from_prediction: negative radius");
  return make_region(dilate_ball(labels_at_least(pred, min_foreground_label), radius));
}

RadiusCurve radius_curve(const LabelVolume& pred, const LabelVolume& gt, int r_max,
                         const std::vector<Label>& classes, Label min_foreground_label) {
  if (r_max < 0) throw GeometryError("radius_curve: negative r_max");
  if (!same_geometry(pred, gt))
    throw ShapeError("radius_curve: prediction " + to_string(pred.dims()) + " vs ground truth " + to_string(gt.dims()));
  const BinaryMask fg = labels_at_least(pred, min_foreground_label);
  RadiusCurve curve;
  for (int r = 0; r <= r_max; ++r) {
    const BinaryMask cand = dilate_ball(fg, r);
    for (Label k : classes) curve.rows.push_back({r, k, recall_fpr(cand, gt, k)});
  }
  return curve;
}

std::string RadiusCurve::to_tsv() const {
  std::ostringstream os;
  os << "r\tclass\trecall\tfpr\n";
  char buf[96];
  for (const CurveRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d\t%d\t%.6f\t%.6f\n", row.radius, int(row.label), row.value.recall, row.value.fpr);
    os << buf;
  }
  return os.str();
}

}  // namespace cseg
