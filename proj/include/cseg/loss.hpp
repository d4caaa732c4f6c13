#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cseg/tensor.hpp"
#include "cseg/volume.hpp"

namespace cseg {

/// Per-class voxel counts inside a candidate region.
struct ClassStats {
  std::vector<std::uint64_t> counts;  // N_k, k = 0..K-1
  std::uint64_t region_voxels = 0;    // N_C

  explicit ClassStats(int num_classes = 0) : counts(num_classes, 0) {}
  int num_classes() const { return static_cast<int>(counts.size()); }

  /// Adds the labels that fall inside `region` (all voxels when null).
  void accumulate(const LabelVolume& labels, const BinaryMask* region);
};

struct ClassWeights {
  std::vector<double> lambda;
  int num_classes() const { return static_cast<int>(lambda.size()); }
};

/// lambda_k = (1 - N_k / N_C) / (K - 1). Sums to one whenever the counts
/// partition the region.
ClassWeights class_weights(const ClassStats& stats);

/// lambda_k = 1/K for every class (plain cross-entropy scaled by 1/K).
ClassWeights uniform_weights(int num_classes);

/// Softmax over the channel axis, max-subtracted.
template <class T>
Tensor5<T> softmax(const Tensor5<T>& logits);

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor5<T> grad;          // dL/dlogits, zero outside the mask
  std::size_t voxels = 0;   // N, number of masked voxels
};

/// Floor applied to probabilities inside the log.
inline constexpr double kLogFloor = 1e-12;

/// Class-weighted voxel-wise cross-entropy over the masked voxels:
///   L = -(1/N) sum_x lambda_{y(x)} log p_{y(x)}(x)
/// `labels` and `mask` hold n*d*h*w entries in (n, z, y, x) order.
template <class T>
LossResult<T> weighted_ce(const Tensor5<T>& logits, std::span<const Label> labels, const ClassWeights& weights,
                          std::span<const std::uint8_t> mask);

/// Single-sample convenience form; tiles must match the logits' spatial dims.
template <class T>
LossResult<T> weighted_ce(const Tensor5<T>& logits, const LabelVolume& labels, const ClassWeights& weights,
                          const BinaryMask& mask) {
  return weighted_ce<T>(logits, std::span<const Label>(labels.data()), weights,
                        std::span<const std::uint8_t>(mask.data()));
}

}  // namespace cseg
