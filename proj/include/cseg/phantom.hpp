#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cseg/volume.hpp"

namespace cseg {

enum class Structure { Body, LargeOrgan, SmallOrgan, Vessel, ExtraOrgan };

/// Recipe for a synthetic CT-like volume: an ellipsoidal body on air with
/// blob organs and a thin curved tube inside it. Sizes scale with `dims`
/// except the tube radius, which is given in voxels.
struct PhantomSpec {
  Dims3 dims{64, 64, 64};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
  double noise_std = 20.0;  // HU

  float air_hu = -1000.0f;
  float body_hu = 40.0f;
  float large_hu = 100.0f;
  float small_hu = 150.0f;
  float vessel_hu = 230.0f;
  float extra_hu = 180.0f;
  double intensity_jitter = 10.0;  // per-structure offset drawn from [-j, j] HU

  bool body_as_background = false;  // body tissue labelled 0 instead of its own class
  bool large_organ = true;
  bool small_organ = true;
  bool vessel = true;
  bool extra_organ = false;

  double small_scale = 1.0;        // multiplies the small-organ semi-axes
  double vessel_radius_min = 2.0;  // voxels
  double vessel_radius_max = 3.0;
};

/// Class names in label order; index 0 is background.
std::vector<std::string> class_names(const PhantomSpec& spec);
int num_classes(const PhantomSpec& spec);

/// Label of a structure, or -1 when the spec has no class for it.
int label_of(const PhantomSpec& spec, Structure s);

struct PhantomInfo {
  std::array<double, 3> body_centre{};
  std::array<double, 3> body_axes{};
  std::array<double, 3> large_centre{};
  std::array<double, 3> small_centre{};
  std::array<double, 3> extra_centre{};
  double vessel_radius = 0.0;
};

struct Phantom {
  Volume3 ct;
  LabelVolume labels;
  PhantomInfo info;
};

/// Deterministic in `spec` (including its seed). Throws GeometryError when
/// any dimension is below 48.
Phantom generate(const PhantomSpec& spec);

struct SyntheticCase {
  Phantom phantom;
  std::uint64_t seed;
  bool validation;
};

/// n phantoms with seeds derived from (base_seed, index). The last
/// `validation_count` cases are tagged for validation.
std::vector<SyntheticCase> generate_dataset(const PhantomSpec& spec, int n, std::uint64_t base_seed,
                                            int validation_count);

/// Second phantom family: shifted intensities and an additional organ class.
PhantomSpec transfer_family(PhantomSpec spec);

}  // namespace cseg
