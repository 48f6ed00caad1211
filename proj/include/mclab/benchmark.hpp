#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mclab/config.hpp"
#include "mclab/fedtrain.hpp"
#include "mclab/report.hpp"

namespace mclab {

using Logger = std::function<void(const std::string&)>;

/// Model names of one bilateral run, in evaluation order.
inline const std::vector<std::string> kBilateralModels{"source", "tl", "lwf", "target"};

struct BilateralModel {
  std::string name;
  std::vector<std::uint8_t> checkpoint;  // encoded MCKP bytes
  MetricsReport report;
  int best_epoch = 0;
};

struct BilateralResult {
  std::uint64_t seed = 0;
  std::vector<BilateralModel> models;  // ordered as kBilateralModels

  const BilateralModel& model(const std::string& name) const;
};

/// Source-only training, then naive TL and LWF transfers of that model to the
/// target, and a target-only model; every model is evaluated on both test
/// splits with and without brain masks. Checkpoints go to `work_dir`; the
/// transfers read the source model back from its file.
BilateralResult run_bilateral(const CenterDataset& source, const CenterDataset& target, const TrainConfig& cfg,
                              const EvalOptions& eval, const std::filesystem::path& work_dir, const Logger& log = {});

struct ScenarioResult {
  std::string name;
  std::string source;
  std::string target;
  std::vector<BilateralResult> repeats;
};

/// Runs every scenario of a benchmark config for seeds train.seed + 0..repeats-1.
/// Profiles are resolved against `preset_dir`. Writes generated data,
/// checkpoints, one run directory per (scenario, model) holding metrics.json,
/// and a summary table per scenario under `out_dir`.
std::vector<ScenarioResult> run_benchmark(const BenchmarkConfig& cfg, const std::filesystem::path& preset_dir,
                                          const std::filesystem::path& out_dir, const Logger& log = {});

}  // namespace mclab
