#pragma once

// Finite-difference verification of the layer kernels.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cseg/tensor.hpp"

namespace cseg {

/// A differentiable map from several tensors to one output tensor.
/// `backward` receives dL/doutput and returns one gradient per input, in
/// the order of `inputs`.
struct Differentiable {
  std::string name;
  std::vector<Tensor5<double>> inputs;
  std::function<Tensor5<double>(const std::vector<Tensor5<double>>&)> forward;
  std::function<std::vector<Tensor5<double>>(const std::vector<Tensor5<double>>&, const Tensor5<double>&)>
      backward;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares the analytic gradient of L = sum(R * op(inputs)), R a seeded
/// standard-normal projection, with central differences of step `step`.
/// Relative error per entry is |a - f| / max(|a|, |f|, 1e-6).
GradCheckReport gradcheck(const Differentiable& op, std::uint64_t seed, double step = 1e-4,
                          std::size_t max_entries_per_input = 256);

enum class LayerKind { Conv3d, Pointwise, Relu, MaxPool2, UpConv2, BatchNormTrain, BatchNormEval, ConcatCrop,
                       WeightedCE };

std::string layer_name(LayerKind kind);
const std::vector<LayerKind>& all_layer_kinds();

/// Builds a randomly shaped, randomly valued instance of a layer from `seed`.
/// With `corrupt_backward`, the first input's analytic gradient is scaled
/// by 1.5 (negative control).
Differentiable make_layer_case(LayerKind kind, std::uint64_t seed, bool corrupt_backward = false);

}  // namespace cseg
