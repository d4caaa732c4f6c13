#include "cseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cseg {

void ClassStats::accumulate(const LabelVolume& labels, const BinaryMask* region) {
  if (region && !same_geometry(labels, *region))
    throw ShapeError("ClassStats::accumulate: region dims differ from labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (region && !(*region)[i]) continue;
    const Label k = labels[i];
    if (k >= counts.size())
      throw ShapeError("ClassStats::accumulate: label " + std::to_string(k) + " >= K = " +
                       std::to_string(counts.size()));
    ++counts[k];
    ++region_voxels;
  }
}

ClassWeights class_weights(const ClassStats& stats) {
  const int K = stats.num_classes();
  if (K < 2) throw ShapeError("class_weights: need at least two classes");
  if (stats.region_voxels == 0) throw EmptyRegion("class_weights: candidate region is empty");
  ClassWeights w;
  w.lambda.resize(K);
  const double nc = static_cast<double>(stats.region_voxels);
  for (int k = 0; k < K; ++k)
    w.lambda[k] = (1.0 - static_cast<double>(stats.counts[k]) / nc) / (K - 1);
  return w;
}

ClassWeights uniform_weights(int num_classes) {
  if (num_classes < 2) throw ShapeError("uniform_weights: need at least two classes");
  return ClassWeights{std::vector<double>(num_classes, 1.0 / num_classes)};
}

template <class T>
Tensor5<T> softmax(const Tensor5<T>& logits) {
  const int K = logits.c();
  const std::size_t S = logits.spatial();
  Tensor5<T> p(logits.shape);
  std::vector<double> e(K);
  for (int n = 0; n < logits.n(); ++n) {
    const T* z = &logits.values[logits.offset(n, 0, 0, 0, 0)];
    T* out = &p.values[p.offset(n, 0, 0, 0, 0)];
    for (std::size_t i = 0; i < S; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(z[k * S + i]));
      double sum = 0.0;
      for (int k = 0; k < K; ++k) {
        e[k] = std::exp(static_cast<double>(z[k * S + i]) - mx);
        sum += e[k];
      }
      for (int k = 0; k < K; ++k) out[k * S + i] = static_cast<T>(e[k] / sum);
    }
  }
  return p;
}

template <class T>
LossResult<T> weighted_ce(const Tensor5<T>& logits, std::span<const Label> labels, const ClassWeights& weights,
                          std::span<const std::uint8_t> mask) {
  const int K = logits.c();
  const std::size_t S = logits.spatial();
  const std::size_t total = S * logits.n();
  if (labels.size() != total || mask.size() != total)
    throw ShapeError("weighted_ce: labels/mask hold " + std::to_string(labels.size()) + "/" +
                     std::to_string(mask.size()) + " voxels, logits " + to_string(logits.shape));
  if (weights.num_classes() != K)
    throw ShapeError("weighted_ce: " + std::to_string(weights.num_classes()) + " weights for " +
                     std::to_string(K) + " classes");
  const std::size_t N = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(),
                                                               [](std::uint8_t m) { return m != 0; }));
  if (N == 0) throw EmptyRegion("weighted_ce: mask selects no voxel");

  LossResult<T> r;
  r.voxels = N;
  r.grad = Tensor5<T>(logits.shape);
  const double inv_n = 1.0 / static_cast<double>(N);
  const double log_floor = std::log(kLogFloor);
  std::vector<double> e(K);
  double acc = 0.0;
  for (int n = 0; n < logits.n(); ++n) {
    const T* z = &logits.values[logits.offset(n, 0, 0, 0, 0)];
    T* g = &r.grad.values[r.grad.offset(n, 0, 0, 0, 0)];
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t v = n * S + i;
      if (!mask[v]) continue;
      const int y = labels[v];
      if (y >= K) throw ShapeError("weighted_ce: label " + std::to_string(y) + " out of range");
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(z[k * S + i]));
      double sum = 0.0;
      for (int k = 0; k < K; ++k) {
        e[k] = std::exp(static_cast<double>(z[k * S + i]) - mx);
        sum += e[k];
      }
      const double log_p = std::max(static_cast<double>(z[y * S + i]) - mx - std::log(sum), log_floor);
      const double lam = weights.lambda[y];
      acc -= lam * log_p;
      const double scale = lam * inv_n;
      for (int k = 0; k < K; ++k) {
        const double p = e[k] / sum;
        g[k * S + i] = static_cast<T>(scale * (p - (k == y ? 1.0 : 0.0)));
      }
    }
  }
  r.loss = acc * inv_n;
  return r;
}

template Tensor5<float> softmax<float>(const Tensor5<float>&);
template Tensor5<double> softmax<double>(const Tensor5<double>&);
template LossResult<float> weighted_ce<float>(const Tensor5<float>&, std::span<const Label>, const ClassWeights&,
                                              std::span<const std::uint8_t>);
template LossResult<double> weighted_ce<double>(const Tensor5<double>&, std::span<const Label>,
                                                const ClassWeights&, std::span<const std::uint8_t>);

}  // namespace cseg
