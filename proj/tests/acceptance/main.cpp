// Runs the acceptance criteria and prints one verdict line per criterion.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include "acceptance/criteria.hpp"

#ifndef CSEG_CONFIG_DIR
#define CSEG_CONFIG_DIR "configs"
#endif

namespace {

using Fn = acceptance::Outcome (*)(const acceptance::Context&);

struct Entry {
  const char* title;
  Fn run;
  double budget_seconds;  // 0: no runtime limit
};

const Entry kCriteria[] = {
    {"geometry reproduction", acceptance::geometry, 1},
    {"parameter count", acceptance::parameter_count, 1},
    {"gradient suite", acceptance::gradient_suite, 300},
    {"loss algebra", acceptance::loss_algebra, 0},
    {"morphology and cascade properties", acceptance::morphology, 60},
    {"tiling correctness", acceptance::tiling, 0},
    {"imbalance collapse", acceptance::imbalance, 1800},
    {"cascade improvement", acceptance::cascade_improvement, 3600},
    {"overlap fusion", acceptance::overlap_fusion, 600},
    {"fine-tuning direction", acceptance::finetune_direction, 1800},
    {"io and determinism", acceptance::io_determinism, 0},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  acceptance::Context ctx;
  ctx.cache = "acceptance_cache";
  ctx.config_dir = CSEG_CONFIG_DIR;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  app.add_option("--cache", ctx.cache, "directory for models shared between criteria");
  app.add_option("--configs", ctx.config_dir, "directory holding desk.cfg")->check(CLI::ExistingDirectory);
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= 11; ++i) selected.push_back(i);
  std::filesystem::create_directories(ctx.cache);

  int failures = 0;
  for (int i : selected) {
    const Entry& e = kCriteria[i - 1];
    const auto t0 = std::chrono::steady_clock::now();
    acceptance::Outcome out;
    try {
      out = e.run(ctx);
    } catch (const std::exception& ex) {
      out = {false, std::string("error: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.budget_seconds > 0 && secs > e.budget_seconds) {
      out.pass = false;
      out.detail += "; over the " + std::to_string(static_cast<int>(e.budget_seconds)) + " s budget";
    }
    char line[64];
    std::snprintf(line, sizeof(line), "criterion %d: %s  ", i, out.pass ? "PASS" : "FAIL");
    char tail[32];
    std::snprintf(tail, sizeof(tail), " (%.1f s)", secs);
    const std::string verdict = line + std::string(e.title) + " [" + out.detail + "]" + tail;
    std::printf("%s\n", verdict.c_str());
    std::fflush(stdout);
    // ctest hides the output of passing tests; keep every verdict next to the cached models.
    std::ofstream(ctx.cache / "verdicts.log", std::ios::app) << verdict << '\n';
    failures += !out.pass;
  }
  return failures == 0 ? 0 : 1;
}
