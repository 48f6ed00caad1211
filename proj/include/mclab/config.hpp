#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mclab/dataset_io.hpp"
#include "mclab/error.hpp"
#include "mclab/fedtrain.hpp"

namespace mclab {

Json network_to_json(const NetworkDescriptor& d);
NetworkDescriptor network_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& cfg);

/// Reads TrainConfig fields present in `j` on top of `base`; unknown keys are
/// left to the caller. Wrong types or invalid values raise Config naming the field.
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

/// Parsed `train` command configuration. Paths are kept as written; the CLI
/// resolves them against --workdir.
struct ExperimentConfig {
  TrainConfig train;
  std::vector<std::string> centers;  // manifest paths, in transfer order
  std::string output_dir;
  std::string teacher_path;
  std::string init_path;
  int repeats = 1;
};

ExperimentConfig experiment_config_from_json(const Json& j);
Json experiment_config_to_json(const ExperimentConfig& cfg);

struct BenchmarkScenario {
  std::string name;
  std::string source_profile;  // profile JSON paths relative to the preset file
  std::string target_profile;
};

/// The bilateral benchmark: for every scenario and seed, a source-centre
/// model, naive TL and LWF transfers of it to the target, and a target-only
/// model, all evaluated on both test splits.
struct BenchmarkConfig {
  std::vector<BenchmarkScenario> scenarios;
  TrainConfig train;
  int repeats = 3;
  EvalOptions eval;
};

BenchmarkConfig benchmark_config_from_json(const Json& j);
BenchmarkConfig load_benchmark_config(const std::filesystem::path& path);

Json load_json(const std::filesystem::path& path, ErrorCode on_error);

/// Seed override from the MCLAB_SEED environment variable, if set.
std::optional<std::uint64_t> seed_from_env();

}  // namespace mclab
