#include "cseg/tiler.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "cseg/loss.hpp"
#include "cseg/parallel.hpp"

namespace cseg {

OverlapMode parse_overlap_mode(const std::string& s) {
  if (s == "none") return OverlapMode::None;
  if (s == "xy_half") return OverlapMode::XyHalf;
  throw InvalidMode("parse_overlap_mode: unknown mode '" + s + "' (expected none or xy_half)");
}

std::string to_string(OverlapMode m) { return m == OverlapMode::None ? "none" : "xy_half"; }

namespace {

std::vector<int> axis_origins(int n, int out, int stride) {
  std::vector<int> o;
  for (int p = 0;; p += stride) {
    o.push_back(p);
    if (p + out >= n) break;
  }
  return o;
}

bool touches(const BinaryMask& m, const Dims3& origin, const Dims3& size) {
  const int x1 = std::min(origin[0] + size[0], m.nx()), y1 = std::min(origin[1] + size[1], m.ny()),
            z1 = std::min(origin[2] + size[2], m.nz());
  for (int z = origin[2]; z < z1; ++z)
    for (int y = origin[1]; y < y1; ++y)
      for (int x = origin[0]; x < x1; ++x)
        if (m(x, y, z)) return true;
  return false;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TilePlan plan_tiles(const Dims3& volume, const NetworkConfig& net, OverlapMode mode, const BinaryMask* restrict) {
  for (int a = 0; a < 3; ++a)
    if (volume[a] <= 0) throw DegenerateVolume("plan_tiles: non-positive dimension in " + to_string(volume));
  if (restrict && restrict->dims() != volume)
    throw ShapeError("plan_tiles: restrict mask " + to_string(restrict->dims()) + " vs volume " + to_string(volume));
  TilePlan plan;
  plan.volume = volume;
  plan.input_tile = net.input_tile;
  plan.output_tile = output_shape(net);
  plan.mode = mode;
  const Dims3& out = plan.output_tile;
  std::array<std::vector<int>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    const int stride = (mode == OverlapMode::XyHalf && a < 2) ? std::max(out[a] / 2, 1) : out[a];
    axes[a] = axis_origins(volume[a], out[a], stride);
  }
  for (int oz : axes[2])
    for (int oy : axes[1])
      for (int ox : axes[0]) {
        const Dims3 o{ox, oy, oz};
        if (restrict && !touches(*restrict, o, out)) continue;
        plan.origins.push_back(o);
      }
  const Dims3 margin = context_margin(net);
  for (int a = 0; a < 3; ++a) {
    plan.padding.low[a] = margin[a];
    int far = 0;
    for (const Dims3& o : plan.origins) far = std::max(far, o[a] + out[a] + margin[a] - volume[a]);
    plan.padding.high[a] = far;
  }
  return plan;
}

std::vector<int> coverage_counts(const TilePlan& plan) {
  const Dims3& v = plan.volume;
  std::vector<int> cov(voxel_count(v), 0);
  for (const Dims3& o : plan.origins)
    for (int z = o[2]; z < std::min(o[2] + plan.output_tile[2], v[2]); ++z)
      for (int y = o[1]; y < std::min(o[1] + plan.output_tile[1], v[1]); ++y)
        for (int x = o[0]; x < std::min(o[0] + plan.output_tile[0], v[0]); ++x)
          ++cov[static_cast<std::size_t>(x) + static_cast<std::size_t>(v[0]) * (y + static_cast<std::size_t>(v[1]) * z)];
  return cov;
}

FusionAccumulator::FusionAccumulator(const Dims3& dims, const Spacing3& spacing, int num_classes)
    : dims_(dims), spacing_(spacing), num_classes_(num_classes) {
  if (num_classes < 1) throw ShapeError("FusionAccumulator: need at least one class");
  sums_.assign(voxel_count(dims) * num_classes, 0.0);
  coverage_.assign(voxel_count(dims), 0);
}

void FusionAccumulator::add(const Dims3& origin, const Tensor5<float>& probs) {
  if (probs.n() != 1 || probs.c() != num_classes_)
    throw ShapeError("FusionAccumulator::add: probabilities " + to_string(probs.shape) + " for " +
                     std::to_string(num_classes_) + " classes");
  const std::size_t nvox = coverage_.size();
  for (int z = 0; z < probs.d(); ++z) {
    const int vz = origin[2] + z;
    if (vz < 0 || vz >= dims_[2]) continue;
    for (int y = 0; y < probs.h(); ++y) {
      const int vy = origin[1] + y;
      if (vy < 0 || vy >= dims_[1]) continue;
      for (int x = 0; x < probs.w(); ++x) {
        const int vx = origin[0] + x;
        if (vx < 0 || vx >= dims_[0]) continue;
        const std::size_t i = index(vx, vy, vz);
        ++coverage_[i];
        for (int k = 0; k < num_classes_; ++k) sums_[k * nvox + i] += probs.at(0, k, z, y, x);
      }
    }
  }
}

Prediction FusionAccumulator::finalize(const BinaryMask* restrict) const {
  if (restrict && restrict->dims() != dims_)
    throw ShapeError("FusionAccumulator::finalize: restrict mask " + to_string(restrict->dims()) + " vs " +
                     to_string(dims_));
  const std::size_t nvox = coverage_.size();
  Prediction p;
  p.probabilities.assign(num_classes_, Volume3(dims_, spacing_));
  p.labels = LabelVolume(dims_, spacing_);
  for (std::size_t i = 0; i < nvox; ++i) {
    if (restrict && !(*restrict)[i]) {
      p.probabilities[0][i] = 1.0f;
      continue;
    }
    if (coverage_[i] == 0)
      throw ShapeError("FusionAccumulator::finalize: requested voxel " + std::to_string(i) + " was never covered");
    const double inv = 1.0 / coverage_[i];
    int best = 0;
    double best_p = -1.0;
    for (int k = 0; k < num_classes_; ++k) {
      const double v = sums_[k * nvox + i] * inv;
      p.probabilities[k][i] = static_cast<float>(v);
      if (v > best_p) {
        best_p = v;
        best = k;
      }
    }
    p.labels[i] = static_cast<Label>(best);
  }
  return p;
}

Tensor5<float> extract_tile(const Volume3& vol, const Dims3& output_origin, const NetworkConfig& net) {
  const Dims3 margin = context_margin(net);
  const Dims3& in = net.input_tile;
  const Volume3 crop = crop_reflected(vol, {output_origin[0] - margin[0], output_origin[1] - margin[1],
                                            output_origin[2] - margin[2]}, in);
  Tensor5<float> t({1, 1, in[2], in[1], in[0]});
  std::memcpy(t.values.data(), crop.data().data(), crop.size() * sizeof(float));
  return t;
}

Prediction predict_volume(const UNet& net, const Volume3& vol, const TilePlan& plan, const BinaryMask* restrict) {
  if (plan.volume != vol.dims())
    throw ShapeError("predict_volume: plan for " + to_string(plan.volume) + " applied to " + to_string(vol.dims()));
  if (plan.input_tile != net.config().input_tile)
    throw ShapeError("predict_volume: plan input tile " + to_string(plan.input_tile) + " vs network " +
                     to_string(net.config().input_tile));
  if (restrict && restrict->dims() != vol.dims())
    throw ShapeError("predict_volume: restrict mask " + to_string(restrict->dims()) + " vs volume " +
                     to_string(vol.dims()));
  FusionAccumulator acc(vol.dims(), vol.spacing(), net.config().num_classes);
  const int workers = std::max(1, worker_count());
  const std::size_t batch = static_cast<std::size_t>(workers);
  std::vector<Tensor5<float>> probs(batch);
  for (std::size_t start = 0; start < plan.origins.size(); start += batch) {
    const std::size_t count = std::min(batch, plan.origins.size() - start);
    parallel_for(
        count,
        [&](std::size_t j) {
          probs[j] = softmax(net.forward(extract_tile(vol, plan.origins[start + j], net.config())));
        },
        workers);
    for (std::size_t j = 0; j < count; ++j) acc.add(plan.origins[start + j], probs[j]);
  }
  return acc.finalize(restrict);
}

CascadeResult two_stage_predict(const UNet& net1, const UNet& net2, const Volume3& ct, const TwoStageConfig& config) {
  if (net1.config().num_classes != net2.config().num_classes)
    throw ShapeError("two_stage_predict: stage networks have " + std::to_string(net1.config().num_classes) + " and " +
                     std::to_string(net2.config().num_classes) + " classes");
  CascadeResult r;
  auto t0 = std::chrono::steady_clock::now();
  r.half_ct = resample_down2(ct, Interp::Linear);
  r.timings.downsample = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.body = body_mask(r.half_ct, config.cascade);
  r.timings.body = seconds_since(t0);

  const Volume3 input = apply_window(r.half_ct, config.cascade.window_low, config.cascade.window_high);
  t0 = std::chrono::steady_clock::now();
  const BinaryMask* c1 = config.restrict_stage1_to_body ? &r.body.mask : nullptr;
  r.stage1 = predict_volume(net1, input, plan_tiles(r.half_ct.dims(), net1.config(), OverlapMode::None, c1), c1);
  r.timings.stage1 = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.candidate = candidate_from_prediction(r.stage1.labels, config.cascade.dilation_radius,
                                          config.cascade.min_foreground_label);
  r.timings.candidate = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (count_true(r.candidate.mask) == 0) {
    r.warnings.push_back("two_stage_predict: first stage found no foreground; output is all background");
    FusionAccumulator empty(r.half_ct.dims(), r.half_ct.spacing(), net2.config().num_classes);
    r.stage2 = empty.finalize(&r.candidate.mask);
  } else {
    const TilePlan plan = plan_tiles(r.half_ct.dims(), net2.config(), config.stage2_mode, &r.candidate.mask);
    r.stage2 = predict_volume(net2, input, plan, &r.candidate.mask);
  }
  r.timings.stage2 = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (config.full_resolution_output) {
    r.labels = upsample(r.stage2.labels, ct.dims(), Interp::Nearest);
    for (const Volume3& p : r.stage2.probabilities) r.probabilities.push_back(upsample(p, ct.dims(), Interp::Linear));
  } else {
    r.labels = r.stage2.labels;
    r.probabilities = r.stage2.probabilities;
  }
  r.timings.upsample = seconds_since(t0);
  return r;
}

}  // namespace cseg
