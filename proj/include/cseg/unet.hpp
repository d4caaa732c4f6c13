#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cseg/layers.hpp"
#include "cseg/volume.hpp"

namespace cseg {

struct NetworkConfig {
  int levels = 4;         // resolution levels, including the bottom one
  int base_channels = 32;
  int num_classes = 8;    // K
  int in_channels = 1;
  Dims3 input_tile{132, 132, 116};  // (x, y, z) voxels

  bool operator==(const NetworkConfig&) const = default;
};

/// Spatial output size of the network for its configured input tile.
/// Throws GeometryError naming the first layer whose feature map cannot be
/// formed (non-positive size, odd size before pooling, odd crop).
Dims3 output_shape(const NetworkConfig& config);

/// Per-axis context the network consumes on each side of its output region.
Dims3 context_margin(const NetworkConfig& config);

enum class LayerType { Conv, BatchNorm, Relu, MaxPool, UpConv, ConcatCrop, Head };

struct LayerSpec {
  LayerType type;
  std::string name;
  int c_in = 0;
  int c_out = 0;
  int weight = -1;  // parameter indices, -1 when unused
  int bias = -1;
  int running_mean = -1;  // buffer indices (batch norm)
  int running_var = -1;
};

struct Parameter {
  std::string name;
  Tensor5<float> value;
  std::vector<float> grad;
};

struct Buffer {
  std::string name;
  std::vector<float> values;
};

/// Activations retained by a training forward pass for the backward pass.
struct ForwardTape {
  struct Record {
    Tensor5<float> input;
    BatchNormCache<float> norm;
    std::vector<std::uint32_t> argmax;
    Shape5 skip_shape{};
  };
  std::vector<Record> records;
};

class UNet {
 public:
  UNet() = default;

  /// Builds the layer graph and initialises parameters from `seed`:
  /// conv/upconv weights uniform with standard deviation sqrt(2 / fan_in),
  /// biases zero, batch norm gamma = 1, beta = 0.
  static UNet build(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  Dims3 output_tile() const { return output_shape(config_); }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;

  /// Inference pass with batch norm in eval mode. Safe to call concurrently.
  Tensor5<float> forward(const Tensor5<float>& input) const;

  /// Training pass: batch statistics, running estimates updated, activations
  /// recorded in `tape`.
  Tensor5<float> forward_train(const Tensor5<float>& input, ForwardTape& tape);

  /// Accumulates parameter gradients from dL/dlogits.
  void backward(const ForwardTape& tape, const Tensor5<float>& grad_logits);

  void zero_grad();

  /// Replaces the final 1x1x1 convolution with a freshly initialised one
  /// producing `num_classes` channels. Every other parameter is untouched.
  void remap_head(int num_classes, std::uint64_t seed);

 private:
  void check_input(const Tensor5<float>& input) const;
  Tensor5<float> run(const Tensor5<float>& input, NormMode mode, ForwardTape* tape);

  NetworkConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<Parameter> params_;
  std::vector<Buffer> buffers_;
  BatchNormOptions norm_options_;
};

/// Sum of weight, bias and batch-norm affine element counts. Running
/// statistics are not counted.
std::size_t param_count(const UNet& net);

/// Copy of `net` with a new head (see UNet::remap_head).
UNet remap_head(const UNet& net, int num_classes, std::uint64_t seed);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: magic "CSEGUNET", u32 version, config block
/// (i32 levels, base, K, in_channels, tile x y z), u32 entry count, then per
/// entry u8 kind (0 parameter, 1 buffer), u32 name length, name, 5 x i32
/// shape, float32 payload. Little-endian throughout.
void save_checkpoint(const UNet& net, const std::filesystem::path& path);
UNet load_checkpoint(const std::filesystem::path& path);

}  // namespace cseg
