#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cseg/augment.hpp"
#include "cseg/cascade.hpp"
#include "cseg/loss.hpp"
#include "cseg/unet.hpp"

namespace cseg {

struct HistoryRow {
  long iteration = 0;  // 1-based
  double loss = 0.0;
  double val_dice = 0.0;  // NaN when not evaluated at this iteration
  double lr = 0.0;        // effective learning rate
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  long iterations = 1000;
  long validation_interval = 200;  // 0 disables validation
  int batch_size = 1;              // tiles per step, gradients averaged
  std::uint64_t seed = 0;
  int stage = 1;
  double lr_scale = 1.0;  // fine-tuning sets 0.1
  long lr_step = 0;       // step decay period, 0 keeps the rate constant
  double lr_gamma = 0.1;
  bool class_weighting = true;  // false uses 1/K for every class
  Label validation_first_class = 1;  // classes scored by validation Dice
  int max_resample = 64;             // redraws when a tile's mask is empty
  std::function<void(const HistoryRow&)> progress;
};

/// A training or validation volume at network resolution.
struct TrainCase {
  Volume3 image;         // windowed intensities
  LabelVolume labels;
  CandidateRegion region;
  std::vector<std::uint32_t> region_voxels;
};

struct Dataset {
  std::vector<TrainCase> train;
  std::vector<TrainCase> validation;
  int num_classes = 0;
};

struct LabelledVolume {
  Volume3 ct;  // full resolution, HU
  LabelVolume labels;
  bool validation = false;
};

TrainCase make_case(Volume3 image, LabelVolume labels, BinaryMask region);

/// Downsamples by two (linear image, nearest labels), windows the image and
/// uses the body mask as candidate region.
Dataset prepare_first_stage(const std::vector<LabelledVolume>& cases, int num_classes, const CascadeConfig& cascade);

/// Replaces each region by the dilated foreground predicted by `first_stage`
/// inside the body mask, or by the dilated ground truth when the config asks
/// for it. Training cases whose region comes out empty are dropped; throws
/// NoForeground if none remain.
Dataset prepare_second_stage(const Dataset& first, const UNet& first_stage, const CascadeConfig& cascade);

/// Weights over the candidate regions of every training case.
ClassWeights dataset_weights(const Dataset& data);

struct SgdState {
  std::vector<std::vector<float>> velocity;  // one per parameter
};

/// v = momentum * v - lr * g; p = p + v.
void sgd_step(std::span<float> params, std::span<const float> grads, std::span<float> velocity, double lr,
              double momentum);
void sgd_step(UNet& net, SgdState& state, double lr, double momentum);

struct TrainHistory {
  std::vector<HistoryRow> rows;
  long best_iteration = 0;  // 0 when no validation ran
  double best_val_dice = 0.0;
  /// "iteration<TAB>loss<TAB>val_dice<TAB>lr" lines; unevaluated Dice is "nan".
  std::string to_tsv() const;
};

struct TrainResult {
  UNet net;
  TrainHistory history;
};

/// Mean Dice of classes >= first_class over validation cases, predicted on
/// non-overlapping tiles inside each case's region.
double validation_dice(const UNet& net, const std::vector<TrainCase>& cases, Label first_class);

/// Momentum SGD on one augmented tile per step. With validation enabled the
/// returned network is the best-scoring snapshot. Throws DivergedError on a
/// non-finite loss.
TrainResult train(UNet net, const Dataset& data, const TrainConfig& config, const AugmentConfig& augment);

/// New head with `num_classes` outputs, every other parameter from
/// `checkpoint`, learning rate scaled by 0.1.
TrainResult finetune(const UNet& checkpoint, int num_classes, const Dataset& data, TrainConfig config,
                     const AugmentConfig& augment);
TrainResult finetune(const std::filesystem::path& checkpoint, int num_classes, const Dataset& data,
                     TrainConfig config, const AugmentConfig& augment);

}  // namespace cseg
