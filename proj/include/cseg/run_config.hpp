#pragma once

#include <filesystem>
#include <string>

#include "cseg/augment.hpp"
#include "cseg/cascade.hpp"
#include "cseg/tiler.hpp"
#include "cseg/trainer.hpp"
#include "cseg/unet.hpp"

namespace cseg {

struct TilerConfig {
  OverlapMode overlap = OverlapMode::XyHalf;
  bool restrict_stage1_to_body = true;
};

struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  AugmentConfig augment;
  CascadeConfig cascade;
  TilerConfig tiler;

  TwoStageConfig two_stage() const;
};

/// INI-style text: [network], [train], [augment], [cascade], [tiler]
/// sections holding `key = value` lines; '#' starts a comment. Unknown
/// sections or keys and malformed values throw ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Text form accepted by parse_run_config.
std::string format_run_config(const RunConfig& config);

}  // namespace cseg
