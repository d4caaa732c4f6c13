#include "cseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace cseg {

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  if (!same_geometry(pred, gt))
    throw ShapeError("dice: dims " + to_string(pred.dims()) + " vs " + to_string(gt.dims()));
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

RecallFpr recall_fpr(const BinaryMask& candidate, const LabelVolume& gt, Label k) {
  if (!same_geometry(candidate, gt))
    throw ShapeError("recall_fpr: dims " + to_string(candidate.dims()) + " vs " + to_string(gt.dims()));
  std::size_t pos = 0, hit = 0, neg = 0, false_pos = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool c = candidate[i] != 0;
    if (gt[i] == k) {
      ++pos;
      hit += c;
    } else {
      ++neg;
      false_pos += c;
    }
  }
  if (pos == 0) throw ClassAbsent("recall_fpr: class " + std::to_string(k) + " has no ground-truth voxel");
  RecallFpr r;
  r.recall = static_cast<double>(hit) / static_cast<double>(pos);
  r.fpr = neg ? static_cast<double>(false_pos) / static_cast<double>(neg) : 0.0;
  return r;
}

RecallFpr sensitivity_fpr(const LabelVolume& pred, const LabelVolume& gt, Label k) {
  if (!same_geometry(pred, gt))
    throw ShapeError("sensitivity_fpr: dims " + to_string(pred.dims()) + " vs " + to_string(gt.dims()));
  return recall_fpr(labels_equal(pred, k), gt, k);
}

double DiceReport::overall_mean() const { return row("Mean").across_classes; }

const SummaryRow& DiceReport::row(const std::string& name) const {
  for (const auto& r : summary)
    if (r.name == name) return r;
  throw ShapeError("DiceReport: no summary row " + name);
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double pop_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

DiceReport dice_table(const std::vector<EvalCase>& cases, const std::vector<ClassColumn>& classes) {
  DiceReport rep;
  rep.classes = classes;
  for (const EvalCase& c : cases) {
    if (!same_geometry(*c.pred, *c.gt))
      throw ShapeError("dice_table: prediction " + to_string(c.pred->dims()) + " vs ground truth " +
                       to_string(c.gt->dims()));
    std::vector<double> row;
    std::vector<bool> flags;
    for (const ClassColumn& col : classes) {
      const BinaryMask p = labels_equal(*c.pred, col.label);
      const BinaryMask g = labels_equal(*c.gt, col.label);
      flags.push_back(count_true(p) == 0 && count_true(g) == 0);
      row.push_back(dice(p, g));
    }
    rep.per_case.push_back(std::move(row));
    rep.both_empty.push_back(std::move(flags));
  }
  const char* names[] = {"Mean", "Std", "Median", "Min", "Max"};
  for (const char* name : names) rep.summary.push_back({name, {}, 0.0});
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<double> col;
    for (const auto& r : rep.per_case) col.push_back(r[k]);
    rep.summary[0].values.push_back(mean_of(col));
    rep.summary[1].values.push_back(pop_std(col));
    rep.summary[2].values.push_back(median_of(col));
    rep.summary[3].values.push_back(col.empty() ? 0.0 : *std::min_element(col.begin(), col.end()));
    rep.summary[4].values.push_back(col.empty() ? 0.0 : *std::max_element(col.begin(), col.end()));
  }
  for (auto& r : rep.summary) r.across_classes = mean_of(r.values);
  return rep;
}

std::string DiceReport::to_tsv() const {
  std::ostringstream os;
  os << "Dice";
  for (const auto& c : classes) os << '\t' << c.name;
  os << "\tMean\n";
  for (std::size_t i = 0; i < per_case.size(); ++i) {
    os << "case" << i;
    for (double v : per_case[i]) os << '\t' << fmt(v);
    os << '\t' << fmt(mean_of(per_case[i])) << '\n';
  }
  for (const auto& r : summary) {
    os << r.name;
    for (double v : r.values) os << '\t' << fmt(v);
    os << '\t' << fmt(r.across_classes) << '\n';
  }
  for (std::size_t i = 0; i < both_empty.size(); ++i)
    for (std::size_t k = 0; k < both_empty[i].size(); ++k)
      if (both_empty[i][k]) os << "# both-empty\tcase" << i << '\t' << classes[k].name << '\n';
  return os.str();
}

}  // namespace cseg
