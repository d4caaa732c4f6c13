#include "cseg/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cseg/metrics.hpp"
#include "cseg/tiler.hpp"

namespace cseg {

TrainCase make_case(Volume3 image, LabelVolume labels, BinaryMask region) {
  if (!same_geometry(image, labels) || !same_geometry(image, region))
    throw ShapeError("make_case: image " + to_string(image.dims()) + ", labels " + to_string(labels.dims()) +
                     ", region " + to_string(region.dims()));
  TrainCase c;
  c.image = std::move(image);
  c.labels = std::move(labels);
  c.region = make_region(std::move(region));
  c.region_voxels = true_voxels(c.region.mask);
  return c;
}

Dataset prepare_first_stage(const std::vector<LabelledVolume>& cases, int num_classes, const CascadeConfig& cascade) {
  if (num_classes < 2) throw ShapeError("prepare_first_stage: need at least two classes");
  Dataset data;
  data.num_classes = num_classes;
  for (const LabelledVolume& lv : cases) {
    if (!same_geometry(lv.ct, lv.labels))
      throw ShapeError("prepare_first_stage: CT " + to_string(lv.ct.dims()) + " vs labels " + to_string(lv.labels.dims()));
    const Volume3 half = resample_down2(lv.ct, Interp::Linear);
    CandidateRegion body = body_mask(half, cascade);
    TrainCase c = make_case(apply_window(half, cascade.window_low, cascade.window_high),
                            resample_down2(lv.labels, Interp::Nearest), std::move(body.mask));
    (lv.validation ? data.validation : data.train).push_back(std::move(c));
  }
  if (data.train.empty()) throw EmptyRegion("prepare_first_stage: no training case");
  return data;
}

Dataset prepare_second_stage(const Dataset& first, const UNet& first_stage, const CascadeConfig& cascade) {
  Dataset data;
  data.num_classes = first.num_classes;
  auto region_for = [&](const TrainCase& c) {
    if (cascade.region_from_ground_truth)
      return candidate_from_prediction(c.labels, cascade.dilation_radius, cascade.min_foreground_label).mask;
    const TilePlan plan = plan_tiles(c.image.dims(), first_stage.config(), OverlapMode::None, &c.region.mask);
    const Prediction p = predict_volume(first_stage, c.image, plan, &c.region.mask);
    return candidate_from_prediction(p.labels, cascade.dilation_radius, cascade.min_foreground_label).mask;
  };
  for (const TrainCase& c : first.train) {
    BinaryMask region = region_for(c);
    if (count_true(region) == 0) continue;
    data.train.push_back(make_case(c.image, c.labels, std::move(region)));
  }
  for (const TrainCase& c : first.validation) data.validation.push_back(make_case(c.image, c.labels, region_for(c)));
  if (data.train.empty())
    throw NoForeground("prepare_second_stage: first stage predicted no foreground on any training case");
  return data;
}

ClassWeights dataset_weights(const Dataset& data) {
  ClassStats stats(data.num_classes);
  for (const TrainCase& c : data.train) stats.accumulate(c.labels, &c.region.mask);
  return class_weights(stats);
}

void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity, double lr,
              double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw ShapeError("sgd_step: sizes " + std::to_string(params.size()) + ", " + std::to_string(grads.size()) +
                     ", " + std::to_string(velocity.size()));
  const float m = static_cast<float>(momentum), r = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = m * velocity[i] - r * grads[i];
    params[i] += velocity[i];
  }
}

void sgd_step(UNet& net, SgdState& state, double lr, double momentum) {
  auto& params = net.parameters();
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (const auto& p : params) state.velocity.emplace_back(p.value.size(), 0.0f);
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_step(params[i].value.values, params[i].grad, state.velocity[i], lr, momentum);
}

std::string TrainHistory::to_tsv() const {
  std::ostringstream os;
  os << "iteration\tloss\tval_dice\tlr\n";
  char buf[128];
  for (const HistoryRow& r : rows) {
    if (std::isnan(r.val_dice))
      std::snprintf(buf, sizeof(buf), "%ld\t%.9g\tnan\t%.9g\n", r.iteration, r.loss, r.lr);
    else
      std::snprintf(buf, sizeof(buf), "%ld\t%.9g\t%.9g\t%.9g\n", r.iteration, r.loss, r.val_dice, r.lr);
    os << buf;
  }
  return os.str();
}

double validation_dice(const UNet& net, const std::vector<TrainCase>& cases, Label first_class) {
  if (cases.empty()) return 0.0;
  const int k_count = net.config().num_classes;
  double sum = 0.0;
  std::size_t terms = 0;
  for (const TrainCase& c : cases) {
    const BinaryMask* region = &c.region.mask;
    LabelVolume pred(c.labels.dims(), c.labels.spacing(), 0);
    if (count_true(c.region.mask) > 0) {
      const TilePlan plan = plan_tiles(c.image.dims(), net.config(), OverlapMode::None, region);
      pred = predict_volume(net, c.image, plan, region).labels;
    }
    for (int k = first_class; k < k_count; ++k) {
      sum += dice(labels_equal(pred, static_cast<Label>(k)), labels_equal(c.labels, static_cast<Label>(k)));
      ++terms;
    }
  }
  return terms ? sum / static_cast<double>(terms) : 0.0;
}

namespace {

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<std::vector<float>> buffers;

  static Snapshot of(const UNet& net) {
    Snapshot s;
    for (const auto& p : net.parameters()) s.params.push_back(p.value.values);
    for (const auto& b : net.buffers()) s.buffers.push_back(b.values);
    return s;
  }
  void restore(UNet& net) const {
    for (std::size_t i = 0; i < params.size(); ++i) net.parameters()[i].value.values = params[i];
    for (std::size_t i = 0; i < buffers.size(); ++i) net.buffers()[i].values = buffers[i];
  }
};

double effective_lr(const TrainConfig& config, long iteration) {
  double lr = config.learning_rate * config.lr_scale;
  if (config.lr_step > 0) lr *= std::pow(config.lr_gamma, static_cast<double>((iteration - 1) / config.lr_step));
  return lr;
}

void check_config(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !(c.lr_scale >= 0.0)) throw ConfigError("train: learning rate must be >= 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (c.iterations < 0) throw ConfigError("train: negative iteration budget");
  if (c.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (c.validation_interval < 0) throw ConfigError("train: negative validation interval");
}

}  // namespace

TrainResult train(UNet net, const Dataset& data, const TrainConfig& config, const AugmentConfig& augment) {
  check_config(config);
  if (data.train.empty()) throw EmptyRegion("train: dataset has no training case");
  if (data.num_classes != net.config().num_classes)
    throw ShapeError("train: dataset has " + std::to_string(data.num_classes) + " classes, network " +
                     std::to_string(net.config().num_classes));
  const ClassWeights weights = config.class_weighting ? dataset_weights(data) : uniform_weights(data.num_classes);
  const bool validate = config.validation_interval > 0 && !data.validation.empty();

  TrainResult result;
  TrainHistory& hist = result.history;
  hist.best_val_dice = -1.0;
  Snapshot best;
  SgdState state;
  ForwardTape tape;
  const Dims3& in = net.config().input_tile;

  for (long it = 1; it <= config.iterations; ++it) {
    Rng rng = stream_rng(config.seed, static_cast<std::uint64_t>(it));
    net.zero_grad();
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      SubvolumeSample s;
      for (int attempt = 0;; ++attempt) {
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, data.train.size() - 1)(rng);
        const TrainCase& c = data.train[pick];
        if (!c.region_voxels.empty()) {
          s = sample_subvolume(c.image, c.labels, c.region.mask, net.config(), rng, augment, &c.region_voxels);
          if (count_true(s.mask) > 0) break;
        }
        if (attempt + 1 >= config.max_resample)
          throw EmptyRegion("train: no tile with candidate voxels after " + std::to_string(attempt + 1) + " draws");
      }
      Tensor5<float> x({1, 1, in[2], in[1], in[0]});
      std::copy(s.input.data().begin(), s.input.data().end(), x.values.begin());
      const Tensor5<float> logits = net.forward_train(x, tape);
      LossResult<float> lr = weighted_ce<float>(logits, s.labels, weights, s.mask);
      if (!std::isfinite(lr.loss))
        throw DivergedError("train: non-finite loss at iteration " + std::to_string(it), it);
      if (config.batch_size > 1)
        for (float& g : lr.grad.values) g /= static_cast<float>(config.batch_size);
      net.backward(tape, lr.grad);
      loss += lr.loss / config.batch_size;
    }
    const double rate = effective_lr(config, it);
    sgd_step(net, state, rate, config.momentum);

    HistoryRow row{it, loss, std::numeric_limits<double>::quiet_NaN(), rate};
    if (validate && (it % config.validation_interval == 0 || it == config.iterations)) {
      row.val_dice = validation_dice(net, data.validation, config.validation_first_class);
      if (row.val_dice > hist.best_val_dice) {
        hist.best_val_dice = row.val_dice;
        hist.best_iteration = it;
        best = Snapshot::of(net);
      }
    }
    hist.rows.push_back(row);
    if (config.progress) config.progress(row);
  }
  if (hist.best_iteration > 0) best.restore(net);
  else hist.best_val_dice = 0.0;
  net.zero_grad();
  result.net = std::move(net);
  return result;
}

TrainResult finetune(const UNet& checkpoint, int num_classes, const Dataset& data, TrainConfig config,
                     const AugmentConfig& augment) {
  config.lr_scale = 0.1;
  return train(remap_head(checkpoint, num_classes, config.seed), data, config, augment);
}

TrainResult finetune(const std::filesystem::path& checkpoint, int num_classes, const Dataset& data,
                     TrainConfig config, const AugmentConfig& augment) {
  return finetune(load_checkpoint(checkpoint), num_classes, data, std::move(config), augment);
}

}  // namespace cseg
