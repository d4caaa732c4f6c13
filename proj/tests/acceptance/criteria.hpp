#pragma once

#include <filesystem>
#include <string>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::filesystem::path cache;       // models shared between criteria
  std::filesystem::path config_dir;  // repository configs/
};

Outcome geometry(const Context&);
Outcome parameter_count(const Context&);
Outcome gradient_suite(const Context&);
Outcome loss_algebra(const Context&);
Outcome morphology(const Context&);
Outcome tiling(const Context&);
Outcome imbalance(const Context&);
Outcome cascade_improvement(const Context&);
Outcome overlap_fusion(const Context&);
Outcome finetune_direction(const Context&);
Outcome io_determinism(const Context&);

}  // namespace acceptance
