#pragma once

// Forward and backward kernels for the layer kinds used by the U-Net.
// Every kernel is instantiated for float (training, inference) and double
// (gradient checking).

#include <cstdint>
#include <span>
#include <vector>

#include "cseg/tensor.hpp"

namespace cseg {

// ---------------------------------------------------------------- conv3d

/// Valid (unpadded) 3D cross-correlation with stride 1.
/// weight: (c_out, c_in, kd, kh, kw); bias: c_out values.
template <class T>
Tensor5<T> conv3d_forward(const Tensor5<T>& input, const Tensor5<T>& weight, std::span<const T> bias);

template <class T>
struct ConvGrads {
  Tensor5<T> input;  // empty when not requested
  Tensor5<T> weight;
  std::vector<T> bias;
};

template <class T>
ConvGrads<T> conv3d_backward(const Tensor5<T>& input, const Tensor5<T>& weight,
                             const Tensor5<T>& grad_out, bool want_input_grad = true);

// ---------------------------------------------------------------- relu

template <class T>
Tensor5<T> relu_forward(const Tensor5<T>& input);

/// Gradient passes where input > 0; zero at input == 0.
template <class T>
Tensor5<T> relu_backward(const Tensor5<T>& input, const Tensor5<T>& grad_out);

// ---------------------------------------------------------------- maxpool

template <class T>
struct PoolResult {
  Tensor5<T> output;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

/// 2x2x2 max pooling, stride 2. Ties resolve to the first element in scan
/// order (x fastest).
template <class T>
PoolResult<T> maxpool2_forward(const Tensor5<T>& input);

template <class T>
Tensor5<T> maxpool2_backward(const Shape5& input_shape, const std::vector<std::uint32_t>& argmax,
                             const Tensor5<T>& grad_out);

// ---------------------------------------------------------------- upconv

/// 2x2x2 transposed convolution, stride 2. weight: (c_in, c_out, 2, 2, 2).
template <class T>
Tensor5<T> upconv2_forward(const Tensor5<T>& input, const Tensor5<T>& weight, std::span<const T> bias);

template <class T>
ConvGrads<T> upconv2_backward(const Tensor5<T>& input, const Tensor5<T>& weight,
                              const Tensor5<T>& grad_out);

// ---------------------------------------------------------------- batchnorm

enum class NormMode { Train, Eval };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

template <class T>
struct BatchNormCache {
  NormMode mode = NormMode::Train;
  Tensor5<T> normalized;      // x-hat
  std::vector<T> inv_std;     // per channel
};

/// Per-channel normalisation over (n, d, h, w). Train mode uses batch
/// statistics and updates the running estimates (variance stored unbiased);
/// eval mode uses the running estimates and leaves them untouched.
template <class T>
Tensor5<T> batchnorm_forward(const Tensor5<T>& input, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, NormMode mode,
                             const BatchNormOptions& opt, BatchNormCache<T>* cache);

template <class T>
struct BatchNormGrads {
  Tensor5<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <class T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma,
                                     const Tensor5<T>& grad_out);

// ---------------------------------------------------------------- concat

/// Centre-crops `skip` to the spatial size of `up` and concatenates along
/// channels, skip channels first.
template <class T>
Tensor5<T> concat_crop_forward(const Tensor5<T>& skip, const Tensor5<T>& up);

template <class T>
struct ConcatGrads {
  Tensor5<T> skip;
  Tensor5<T> up;
};

template <class T>
ConcatGrads<T> concat_crop_backward(const Shape5& skip_shape, const Shape5& up_shape,
                                    const Tensor5<T>& grad_out);

}  // namespace cseg
