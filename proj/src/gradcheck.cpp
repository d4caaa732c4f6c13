#include "cseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cseg/layers.hpp"
#include "cseg/loss.hpp"

namespace cseg {

GradCheckReport gradcheck(const Differentiable& op, std::uint64_t seed, double step,
                          std::size_t max_entries_per_input) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor5<double>> inputs = op.inputs;
  const Tensor5<double> out0 = op.forward(inputs);
  Tensor5<double> proj(out0.shape);
  for (double& v : proj.values) v = normal(rng);
  auto objective = [&](const std::vector<Tensor5<double>>& in) {
    const Tensor5<double> o = op.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o.values[i] * proj.values[i];
    return s;
  };
  const std::vector<Tensor5<double>> analytic = op.backward(inputs, proj);
  if (analytic.size() != inputs.size()) throw ShapeError("gradcheck: backward returned wrong count");

  GradCheckReport report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::size_t n = inputs[t].size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n > max_entries_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries_per_input);
    }
    for (std::size_t i : idx) {
      const double saved = inputs[t].values[i];
      inputs[t].values[i] = saved + step;
      const double fp = objective(inputs);
      inputs[t].values[i] = saved - step;
      const double fm = objective(inputs);
      inputs[t].values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[t].values[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.entries_checked;
    }
  }
  return report;
}

std::string layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv3d: return "conv3d";
    case LayerKind::Pointwise: return "conv1x1x1";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::UpConv2: return "upconv2";
    case LayerKind::BatchNormTrain: return "batchnorm_train";
    case LayerKind::BatchNormEval: return "batchnorm_eval";
    case LayerKind::ConcatCrop: return "concat_crop";
    case LayerKind::WeightedCE: return "weighted_ce";
  }
  return "unknown";
}

const std::vector<LayerKind>& all_layer_kinds() {
  static const std::vector<LayerKind> kinds{LayerKind::Conv3d,         LayerKind::Pointwise,
                                            LayerKind::Relu,           LayerKind::MaxPool2,
                                            LayerKind::UpConv2,        LayerKind::BatchNormTrain,
                                            LayerKind::BatchNormEval,  LayerKind::ConcatCrop,
                                            LayerKind::WeightedCE};
  return kinds;
}

namespace {

using TD = Tensor5<double>;

TD random_tensor(std::mt19937_64& rng, const Shape5& s, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TD t(s);
  for (double& v : t.values) v = u(rng);
  return t;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

TD as_tensor(const std::vector<double>& v) {
  TD t({static_cast<int>(v.size()), 1, 1, 1, 1});
  t.values = v;
  return t;
}

std::span<const double> flat(const TD& t) { return std::span<const double>(t.values); }

Differentiable conv_case(std::mt19937_64& rng, bool pointwise) {
  const int n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
  const Shape5 ks = pointwise ? Shape5{co, ci, 1, 1, 1} : Shape5{co, ci, pick(rng, 2, 3), pick(rng, 2, 3), pick(rng, 2, 3)};
  const Shape5 xs{n, ci, ks[2] + pick(rng, 0, 3), ks[3] + pick(rng, 0, 3), ks[4] + pick(rng, 0, 3)};
  Differentiable d;
  d.name = pointwise ? "conv1x1x1" : "conv3d";
  d.inputs = {random_tensor(rng, xs), random_tensor(rng, ks), random_tensor(rng, {co, 1, 1, 1, 1})};
  d.forward = [](const std::vector<TD>& in) { return conv3d_forward<double>(in[0], in[1], flat(in[2])); };
  d.backward = [](const std::vector<TD>& in, const TD& g) {
    auto r = conv3d_backward<double>(in[0], in[1], g);
    return std::vector<TD>{r.input, r.weight, as_tensor(r.bias)};
  };
  return d;
}

Differentiable relu_case(std::mt19937_64& rng) {
  const Shape5 s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
  TD x = random_tensor(rng, s, 0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : x.values)
    if (sign(rng)) v = -v;
  Differentiable d;
  d.name = "relu";
  d.inputs = {x};
  d.forward = [](const std::vector<TD>& in) { return relu_forward<double>(in[0]); };
  d.backward = [](const std::vector<TD>& in, const TD& g) { return std::vector<TD>{relu_backward<double>(in[0], g)}; };
  return d;
}

Differentiable pool_case(std::mt19937_64& rng) {
  const Shape5 s{pick(rng, 1, 2), pick(rng, 1, 2), 2 * pick(rng, 1, 2), 2 * pick(rng, 1, 2), 2 * pick(rng, 1, 3)};
  TD x(s);
  // Distinct values spaced far beyond the finite-difference step.
  std::vector<double> vals(x.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i) - 0.3;
  std::shuffle(vals.begin(), vals.end(), rng);
  x.values = vals;
  Differentiable d;
  d.name = "maxpool2";
  d.inputs = {x};
  d.forward = [](const std::vector<TD>& in) { return maxpool2_forward<double>(in[0]).output; };
  d.backward = [](const std::vector<TD>& in, const TD& g) {
    const auto r = maxpool2_forward<double>(in[0]);
    return std::vector<TD>{maxpool2_backward<double>(in[0].shape, r.argmax, g)};
  };
  return d;
}

Differentiable upconv_case(std::mt19937_64& rng) {
  const int n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
  const Shape5 xs{n, ci, pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
  Differentiable d;
  d.name = "upconv2";
  d.inputs = {random_tensor(rng, xs), random_tensor(rng, {ci, co, 2, 2, 2}), random_tensor(rng, {co, 1, 1, 1, 1})};
  d.forward = [](const std::vector<TD>& in) { return upconv2_forward<double>(in[0], in[1], flat(in[2])); };
  d.backward = [](const std::vector<TD>& in, const TD& g) {
    auto r = upconv2_backward<double>(in[0], in[1], g);
    return std::vector<TD>{r.input, r.weight, as_tensor(r.bias)};
  };
  return d;
}

Differentiable batchnorm_case(std::mt19937_64& rng, NormMode mode) {
  const int c = pick(rng, 1, 3);
  const Shape5 xs{pick(rng, 1, 2), c, pick(rng, 2, 3), pick(rng, 2, 3), pick(rng, 2, 3)};
  TD rm = random_tensor(rng, {c, 1, 1, 1, 1}, -0.5, 0.5);
  TD rv = random_tensor(rng, {c, 1, 1, 1, 1}, 0.5, 1.5);
  Differentiable d;
  d.name = mode == NormMode::Train ? "batchnorm_train" : "batchnorm_eval";
  d.inputs = {random_tensor(rng, xs, -2.0, 2.0), random_tensor(rng, {c, 1, 1, 1, 1}, 0.5, 1.5),
              random_tensor(rng, {c, 1, 1, 1, 1})};
  auto run = [rm, rv, mode](const std::vector<TD>& in, BatchNormCache<double>* cache) {
    std::vector<double> m = rm.values, v = rv.values;
    return batchnorm_forward<double>(in[0], flat(in[1]), flat(in[2]), m, v, mode, BatchNormOptions{}, cache);
  };
  d.forward = [run](const std::vector<TD>& in) { return run(in, nullptr); };
  d.backward = [run](const std::vector<TD>& in, const TD& g) {
    BatchNormCache<double> cache;
    run(in, &cache);
    auto r = batchnorm_backward<double>(cache, flat(in[1]), g);
    return std::vector<TD>{r.input, as_tensor(r.gamma), as_tensor(r.beta)};
  };
  return d;
}

Differentiable concat_case(std::mt19937_64& rng) {
  const int n = pick(rng, 1, 2);
  const Shape5 us{n, pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
  const Shape5 ss{n, pick(rng, 1, 3), us[2] + 2 * pick(rng, 0, 2), us[3] + 2 * pick(rng, 0, 2),
                  us[4] + 2 * pick(rng, 0, 2)};
  Differentiable d;
  d.name = "concat_crop";
  d.inputs = {random_tensor(rng, ss), random_tensor(rng, us)};
  d.forward = [](const std::vector<TD>& in) { return concat_crop_forward<double>(in[0], in[1]); };
  d.backward = [](const std::vector<TD>& in, const TD& g) {
    auto r = concat_crop_backward<double>(in[0].shape, in[1].shape, g);
    return std::vector<TD>{r.skip, r.up};
  };
  return d;
}

Differentiable ce_case(std::mt19937_64& rng) {
  const int K = pick(rng, 2, 5);
  const Shape5 s{pick(rng, 1, 2), K, pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4)};
  const std::size_t voxels = static_cast<std::size_t>(s[0]) * s[2] * s[3] * s[4];
  std::vector<Label> labels(voxels);
  std::vector<std::uint8_t> mask(voxels);
  for (auto& l : labels) l = static_cast<Label>(pick(rng, 0, K - 1));
  for (auto& m : mask) m = pick(rng, 0, 3) > 0 ? 1 : 0;
  mask[0] = 1;
  ClassWeights w;
  for (int k = 0; k < K; ++k) w.lambda.push_back(std::uniform_real_distribution<double>(0.05, 1.0)(rng));
  Differentiable d;
  d.name = "weighted_ce";
  d.inputs = {random_tensor(rng, s, -3.0, 3.0)};
  d.forward = [labels, mask, w](const std::vector<TD>& in) {
    TD out({1, 1, 1, 1, 1});
    out.values[0] = weighted_ce<double>(in[0], labels, w, mask).loss;
    return out;
  };
  d.backward = [labels, mask, w](const std::vector<TD>& in, const TD& g) {
    auto r = weighted_ce<double>(in[0], labels, w, mask);
    for (double& v : r.grad.values) v *= g.values[0];
    return std::vector<TD>{r.grad};
  };
  return d;
}

}  // namespace

Differentiable make_layer_case(LayerKind kind, std::uint64_t seed, bool corrupt_backward) {
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(kind) + 1)));
  Differentiable d;
  switch (kind) {
    case LayerKind::Conv3d: d = conv_case(rng, false); break;
    case LayerKind::Pointwise: d = conv_case(rng, true); break;
    case LayerKind::Relu: d = relu_case(rng); break;
    case LayerKind::MaxPool2: d = pool_case(rng); break;
    case LayerKind::UpConv2: d = upconv_case(rng); break;
    case LayerKind::BatchNormTrain: d = batchnorm_case(rng, NormMode::Train); break;
    case LayerKind::BatchNormEval: d = batchnorm_case(rng, NormMode::Eval); break;
    case LayerKind::ConcatCrop: d = concat_case(rng); break;
    case LayerKind::WeightedCE: d = ce_case(rng); break;
  }
  if (corrupt_backward) {
    auto inner = d.backward;
    d.backward = [inner](const std::vector<TD>& in, const TD& g) {
      auto grads = inner(in, g);
      for (double& v : grads.front().values) v *= 1.5;
      return grads;
    };
  }
  return d;
}

}  // namespace cseg
