#include "cseg/unet.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

namespace cseg {

namespace {

struct ParamSpec {
  std::string name;
  Shape5 shape;
  int fan_in;  // 0 for affine parameters/biases
  float fill;
};

struct Blueprint {
  std::vector<LayerSpec> layers;
  std::vector<ParamSpec> params;
  std::vector<std::string> buffers;  // pairs: mean, var
};

void check_config(const NetworkConfig& c) {
  if (c.levels < 2) throw GeometryError("build: levels must be >= 2");
  if (c.base_channels < 1) throw GeometryError("build: base_channels must be positive");
  if (c.num_classes < 2) throw GeometryError("build: num_classes must be >= 2");
  if (c.in_channels < 1) throw GeometryError("build: in_channels must be positive");
}

Blueprint blueprint(const NetworkConfig& c) {
  check_config(c);
  Blueprint bp;
  auto add_param = [&](const std::string& name, Shape5 shape, int fan_in, float fill) {
    bp.params.push_back({name, shape, fan_in, fill});
    return static_cast<int>(bp.params.size() - 1);
  };
  auto conv_block = [&](const std::string& prefix, int idx, int cin, int cout) {
    const std::string tag = std::to_string(idx);
    LayerSpec conv{LayerType::Conv, prefix + ".conv" + tag, cin, cout};
    conv.weight = add_param(conv.name + ".weight", {cout, cin, 3, 3, 3}, cin * 27, 0.f);
    conv.bias = add_param(conv.name + ".bias", {cout, 1, 1, 1, 1}, 0, 0.f);
    bp.layers.push_back(conv);
    LayerSpec bn{LayerType::BatchNorm, prefix + ".bn" + tag, cout, cout};
    bn.weight = add_param(bn.name + ".gamma", {cout, 1, 1, 1, 1}, 0, 1.f);
    bn.bias = add_param(bn.name + ".beta", {cout, 1, 1, 1, 1}, 0, 0.f);
    bp.buffers.push_back(bn.name + ".running_mean");
    bn.running_mean = static_cast<int>(bp.buffers.size() - 1);
    bp.buffers.push_back(bn.name + ".running_var");
    bn.running_var = static_cast<int>(bp.buffers.size() - 1);
    bp.layers.push_back(bn);
    bp.layers.push_back({LayerType::Relu, prefix + ".relu" + tag, cout, cout});
  };

  const int F = c.base_channels;
  int ch = c.in_channels;
  for (int lvl = 0; lvl < c.levels; ++lvl) {
    const std::string prefix = "enc" + std::to_string(lvl);
    const int width = F << lvl;
    conv_block(prefix, 1, ch, width);
    conv_block(prefix, 2, width, 2 * width);
    ch = 2 * width;
    if (lvl + 1 < c.levels) bp.layers.push_back({LayerType::MaxPool, prefix + ".pool", ch, ch});
  }
  for (int lvl = c.levels - 2; lvl >= 0; --lvl) {
    const std::string prefix = "dec" + std::to_string(lvl);
    LayerSpec up{LayerType::UpConv, prefix + ".upconv", ch, ch};
    up.weight = add_param(up.name + ".weight", {ch, ch, 2, 2, 2}, ch, 0.f);
    up.bias = add_param(up.name + ".bias", {ch, 1, 1, 1, 1}, 0, 0.f);
    bp.layers.push_back(up);
    const int skip_ch = F << (lvl + 1);
    bp.layers.push_back({LayerType::ConcatCrop, prefix + ".concat", skip_ch + ch, skip_ch + ch});
    conv_block(prefix, 1, skip_ch + ch, skip_ch);
    conv_block(prefix, 2, skip_ch, skip_ch);
    ch = skip_ch;
  }
  LayerSpec head{LayerType::Head, "head", ch, c.num_classes};
  head.weight = add_param("head.weight", {c.num_classes, ch, 1, 1, 1}, ch, 0.f);
  head.bias = add_param("head.bias", {c.num_classes, 1, 1, 1, 1}, 0, 0.f);
  bp.layers.push_back(head);
  return bp;
}

Dims3 propagate(const NetworkConfig& c, const std::vector<LayerSpec>& layers) {
  Dims3 s = c.input_tile;
  std::vector<Dims3> skips;
  auto fail = [&](const LayerSpec& l, const std::string& why) {
    throw GeometryError("output_shape: layer " + l.name + " " + why + " (input tile " +
                        to_string(c.input_tile) + ")");
  };
  for (int a = 0; a < 3; ++a)
    if (s[a] < 1) throw GeometryError("output_shape: input tile must be positive");
  for (const LayerSpec& l : layers) {
    switch (l.type) {
      case LayerType::Conv:
        for (int a = 0; a < 3; ++a) {
          s[a] -= 2;
          if (s[a] < 1) fail(l, "receives a feature map smaller than its 3x3x3 kernel");
        }
        break;
      case LayerType::MaxPool:
        for (int a = 0; a < 3; ++a)
          if (s[a] % 2) fail(l, "receives odd extent " + std::to_string(s[a]));
        skips.push_back(s);
        for (int a = 0; a < 3; ++a) s[a] /= 2;
        break;
      case LayerType::UpConv:
        for (int a = 0; a < 3; ++a) s[a] *= 2;
        break;
      case LayerType::ConcatCrop: {
        const Dims3 skip = skips.back();
        skips.pop_back();
        for (int a = 0; a < 3; ++a)
          if (skip[a] < s[a] || (skip[a] - s[a]) % 2) fail(l, "cannot centre-crop the skip connection");
        break;
      }
      default:
        break;
    }
  }
  return s;
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = seed ^ 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void init_param(Parameter& p, const ParamSpec& spec, std::uint64_t seed) {
  p.name = spec.name;
  p.value = Tensor5<float>(spec.shape, spec.fill);
  p.grad.assign(p.value.size(), 0.f);
  if (spec.fan_in > 0) {
    // Uniform on [-b, b] has standard deviation b / sqrt(3).
    const double bound = std::sqrt(3.0) * std::sqrt(2.0 / spec.fan_in);
    std::mt19937_64 rng(mix_seed(seed, spec.name));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (float& v : p.value.values) v = static_cast<float>(u(rng));
  }
}

std::span<const float> flat(const Tensor5<float>& t) { return std::span<const float>(t.values); }

void add_into(std::vector<float>& dst, const std::vector<float>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Dims3 output_shape(const NetworkConfig& config) { return propagate(config, blueprint(config).layers); }

Dims3 context_margin(const NetworkConfig& config) {
  const Dims3 out = output_shape(config);
  Dims3 m{};
  for (int a = 0; a < 3; ++a) m[a] = (config.input_tile[a] - out[a]) / 2;
  return m;
}

UNet UNet::build(const NetworkConfig& config, std::uint64_t seed) {
  Blueprint bp = blueprint(config);
  propagate(config, bp.layers);
  UNet net;
  net.config_ = config;
  net.layers_ = std::move(bp.layers);
  net.params_.resize(bp.params.size());
  for (std::size_t i = 0; i < bp.params.size(); ++i) init_param(net.params_[i], bp.params[i], seed);
  for (const std::string& b : bp.buffers) {
    const bool is_var = b.ends_with("running_var");
    const LayerSpec* owner = nullptr;
    for (const auto& l : net.layers_)
      if (l.type == LayerType::BatchNorm && b.starts_with(l.name + ".")) owner = &l;
    net.buffers_.push_back({b, std::vector<float>(owner->c_out, is_var ? 1.f : 0.f)});
  }
  return net;
}

Parameter& UNet::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw CheckpointError("parameter: no parameter named " + name);
}

const Parameter& UNet::parameter(const std::string& name) const {
  return const_cast<UNet*>(this)->parameter(name);
}

void UNet::check_input(const Tensor5<float>& input) const {
  const Dims3& t = config_.input_tile;
  const Shape5 want{input.n(), config_.in_channels, t[2], t[1], t[0]};
  if (input.shape != want)
    throw ShapeError("forward: input " + to_string(input.shape) + " does not match configured tile " +
                     to_string(want));
}

Tensor5<float> UNet::forward(const Tensor5<float>& input) const {
  check_input(input);
  Tensor5<float> x = input;
  std::vector<Tensor5<float>> skips;
  for (const LayerSpec& l : layers_) {
    switch (l.type) {
      case LayerType::Conv:
      case LayerType::Head:
        x = conv3d_forward<float>(x, params_[l.weight].value, flat(params_[l.bias].value));
        break;
      case LayerType::BatchNorm: {
        std::vector<float> m = buffers_[l.running_mean].values, v = buffers_[l.running_var].values;
        x = batchnorm_forward<float>(x, flat(params_[l.weight].value), flat(params_[l.bias].value), m, v,
                                     NormMode::Eval, norm_options_, nullptr);
        break;
      }
      case LayerType::Relu:
        x = relu_forward<float>(x);
        break;
      case LayerType::MaxPool:
        skips.push_back(x);
        x = maxpool2_forward<float>(x).output;
        break;
      case LayerType::UpConv:
        x = upconv2_forward<float>(x, params_[l.weight].value, flat(params_[l.bias].value));
        break;
      case LayerType::ConcatCrop:
        x = concat_crop_forward<float>(skips.back(), x);
        skips.pop_back();
        break;
    }
  }
  return x;
}

Tensor5<float> UNet::forward_train(const Tensor5<float>& input, ForwardTape& tape) {
  check_input(input);
  tape.records.assign(layers_.size(), {});
  Tensor5<float> x = input;
  std::vector<Tensor5<float>> skips;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    auto& rec = tape.records[i];
    switch (l.type) {
      case LayerType::Conv:
      case LayerType::Head:
        rec.input = std::move(x);
        x = conv3d_forward<float>(rec.input, params_[l.weight].value, flat(params_[l.bias].value));
        break;
      case LayerType::BatchNorm:
        x = batchnorm_forward<float>(x, flat(params_[l.weight].value), flat(params_[l.bias].value),
                                     buffers_[l.running_mean].values, buffers_[l.running_var].values,
                                     NormMode::Train, norm_options_, &rec.norm);
        break;
      case LayerType::Relu:
        rec.input = std::move(x);
        x = relu_forward<float>(rec.input);
        break;
      case LayerType::MaxPool: {
        rec.input.shape = x.shape;
        auto r = maxpool2_forward<float>(x);
        rec.argmax = std::move(r.argmax);
        skips.push_back(std::move(x));
        x = std::move(r.output);
        break;
      }
      case LayerType::UpConv:
        rec.input = std::move(x);
        x = upconv2_forward<float>(rec.input, params_[l.weight].value, flat(params_[l.bias].value));
        break;
      case LayerType::ConcatCrop:
        rec.skip_shape = skips.back().shape;
        rec.input.shape = x.shape;
        x = concat_crop_forward<float>(skips.back(), x);
        skips.pop_back();
        break;
    }
  }
  return x;
}

void UNet::backward(const ForwardTape& tape, const Tensor5<float>& grad_logits) {
  if (tape.records.size() != layers_.size()) throw ShapeError("backward: tape does not belong to this network");
  Tensor5<float> g = grad_logits;
  std::vector<Tensor5<float>> skip_grads;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const LayerSpec& l = layers_[i];
    const auto& rec = tape.records[i];
    switch (l.type) {
      case LayerType::Conv:
      case LayerType::Head: {
        auto r = conv3d_backward<float>(rec.input, params_[l.weight].value, g, i > 0);
        add_into(params_[l.weight].grad, r.weight.values);
        add_into(params_[l.bias].grad, r.bias);
        if (i == 0) return;
        g = std::move(r.input);
        break;
      }
      case LayerType::BatchNorm: {
        auto r = batchnorm_backward<float>(rec.norm, flat(params_[l.weight].value), g);
        add_into(params_[l.weight].grad, r.gamma);
        add_into(params_[l.bias].grad, r.beta);
        g = std::move(r.input);
        break;
      }
      case LayerType::Relu:
        g = relu_backward<float>(rec.input, g);
        break;
      case LayerType::MaxPool: {
        g = maxpool2_backward<float>(rec.input.shape, rec.argmax, g);
        add_into(g.values, skip_grads.back().values);
        skip_grads.pop_back();
        break;
      }
      case LayerType::UpConv: {
        auto r = upconv2_backward<float>(rec.input, params_[l.weight].value, g);
        add_into(params_[l.weight].grad, r.weight.values);
        add_into(params_[l.bias].grad, r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerType::ConcatCrop: {
        auto r = concat_crop_backward<float>(rec.skip_shape, rec.input.shape, g);
        skip_grads.push_back(std::move(r.skip));
        g = std::move(r.up);
        break;
      }
    }
  }
}

void UNet::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.f);
}

void UNet::remap_head(int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw GeometryError("remap_head: num_classes must be >= 2");
  LayerSpec& head = layers_.back();
  const int cin = head.c_in;
  head.c_out = num_classes;
  config_.num_classes = num_classes;
  init_param(params_[head.weight], {"head.weight", {num_classes, cin, 1, 1, 1}, cin, 0.f}, seed);
  init_param(params_[head.bias], {"head.bias", {num_classes, 1, 1, 1, 1}, 0, 0.f}, seed);
}

std::size_t param_count(const UNet& net) {
  std::size_t n = 0;
  for (const auto& p : net.parameters()) n += p.value.size();
  return n;
}

UNet remap_head(const UNet& net, int num_classes, std::uint64_t seed) {
  UNet copy = net;
  copy.remap_head(num_classes, seed);
  return copy;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'U', 'N', 'E', 'T'};

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw CheckpointError(std::string("load_checkpoint: truncated file while reading ") + what);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

void put_entry(std::ostream& os, std::uint8_t kind, const std::string& name, const Shape5& shape,
               const std::vector<float>& values) {
  put<std::uint8_t>(os, kind);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  for (int d : shape) put<std::int32_t>(os, d);
  for (float v : values) put<float>(os, v);
}

}  // namespace

void save_checkpoint(const UNet& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("save_checkpoint: cannot open " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  const NetworkConfig& c = net.config();
  for (int v : {c.levels, c.base_channels, c.num_classes, c.in_channels, c.input_tile[0], c.input_tile[1],
                c.input_tile[2]})
    put<std::int32_t>(os, v);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.parameters().size() + net.buffers().size()));
  for (const auto& p : net.parameters()) put_entry(os, 0, p.name, p.value.shape, p.value.values);
  for (const auto& b : net.buffers())
    put_entry(os, 1, b.name, {static_cast<int>(b.values.size()), 1, 1, 1, 1}, b.values);
  if (!os) throw CheckpointError("save_checkpoint: write failed for " + path.string());
}

UNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw CheckpointError("load_checkpoint: " + path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError("load_checkpoint: unsupported format version " + std::to_string(version));
  NetworkConfig c;
  c.levels = get<std::int32_t>(is, "config");
  c.base_channels = get<std::int32_t>(is, "config");
  c.num_classes = get<std::int32_t>(is, "config");
  c.in_channels = get<std::int32_t>(is, "config");
  for (int a = 0; a < 3; ++a) c.input_tile[a] = get<std::int32_t>(is, "config");
  UNet net;
  try {
    net = UNet::build(c, 0);
  } catch (const Error& e) {
    throw CheckpointError(std::string("load_checkpoint: invalid stored config: ") + e.what());
  }
  std::map<std::string, std::vector<float>*> slots;
  std::map<std::string, Shape5> shapes;
  for (auto& p : net.parameters()) {
    slots[p.name] = &p.value.values;
    shapes[p.name] = p.value.shape;
  }
  for (auto& b : net.buffers()) {
    slots[b.name] = &b.values;
    shapes[b.name] = {static_cast<int>(b.values.size()), 1, 1, 1, 1};
  }
  const auto count = get<std::uint32_t>(is, "entry count");
  if (count != slots.size())
    throw CheckpointError("load_checkpoint: expected " + std::to_string(slots.size()) + " entries, found " +
                          std::to_string(count));
  for (std::uint32_t e = 0; e < count; ++e) {
    get<std::uint8_t>(is, "entry kind");
    const auto len = get<std::uint32_t>(is, "name length");
    if (len > 4096) throw CheckpointError("load_checkpoint: corrupt entry name");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("load_checkpoint: truncated entry name");
    Shape5 shape;
    for (int& d : shape) d = get<std::int32_t>(is, "shape");
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("load_checkpoint: unexpected entry " + name);
    if (shapes[name] != shape)
      throw CheckpointError("load_checkpoint: shape mismatch for " + name + ": stored " + to_string(shape) +
                            ", expected " + to_string(shapes[name]));
    for (float& v : *it->second) v = get<float>(is, name.c_str());
  }
  return net;
}

}  // namespace cseg
