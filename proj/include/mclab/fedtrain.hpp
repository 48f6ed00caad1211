#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mclab/checkpoint.hpp"
#include "mclab/lesion_eval.hpp"
#include "mclab/synth.hpp"
#include "mclab/tinynet.hpp"

namespace mclab {

enum class Strategy { single, mixed, tl, lwf };
enum class Topology { swt, cwt };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
std::string to_string(Topology t);
Topology topology_from_string(const std::string& s);

struct TrainConfig {
  int epochs_per_center = 40;
  int batches_per_epoch = 50;
  int batch_size = 16;
  int validate_every_epochs = 2;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double lambda_lwf = 0.1;
  double alpha_ss = 0.5;
  double p_tumor = 0.5;
  double kd_temperature = 2.0;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::single;
  Topology topology = Topology::swt;
  int cycles = 4;              // CWT passes over the centre list
  double threshold = 0.5;      // probability cut for validation masks
  NetworkDescriptor network;

  void validate() const;
};

/// Tag written to provenance. LWF with lambda 0 is plain fine-tuning and is
/// recorded as such.
std::string effective_strategy(const TrainConfig& cfg);

struct ValidationPoint {
  std::string center;
  int hop = 0;
  int epoch = 0;
  double dice = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  int best_epoch = 0;
  std::vector<ValidationPoint> validation;
};

/// One centre, one hop. `init` == nullptr starts from a fresh initialisation
/// seeded by cfg.seed. The returned snapshot is the one with the highest mean
/// validation Dice (earliest epoch on ties), rounded to f32.
TrainResult train_center(const Checkpoint* init, const CenterDataset& center, const TrainConfig& cfg,
                         const Checkpoint* teacher, int hop = 0);

/// Pooled training over the union of train splits, each case equally likely.
TrainResult train_mixed(const std::vector<const CenterDataset*>& centers, const TrainConfig& cfg);

struct HopRecord {
  int hop = 0;
  std::string center;
  std::string manifest;
  std::string checkpoint_in;  // empty for the first hop
  std::string checkpoint_out;
  std::vector<std::string> accessed;  // every dataset file opened during the hop
};

struct ProtocolResult {
  Checkpoint checkpoint;
  std::vector<HopRecord> hops;
  std::vector<ValidationPoint> validation;
};

/// Sequential weight transfer over centre manifests. Hops communicate only
/// through checkpoint files in `work_dir`; each hop opens only its own
/// centre's manifest. SWT makes one pass, CWT cfg.cycles passes.
/// `initial_checkpoint`, when non-empty, is the model arriving at hop 0.
ProtocolResult run_protocol(const std::vector<std::filesystem::path>& manifests, const TrainConfig& cfg,
                            const std::filesystem::path& work_dir,
                            const std::filesystem::path& initial_checkpoint = {});

// ---------------------------------------------------------------------------
// Evaluation

struct MetricsRow {
  std::string center;  // centre name or "combined"
  bool with_brain_mask = true;
  DetectionMetrics detection;
  ContourMetrics contour;
  int n_volumes = 0;
  int n_ref_lesions = 0;
  int n_pred_lesions = 0;
  int out_of_brain_components = 0;  // predicted components with no voxel inside the brain
};

struct EvalCenter {
  std::string name;
  const std::vector<CaseRecord>* cases = nullptr;
};

struct EvalOptions {
  double tolerance_mm = 1.0;
  double threshold = 0.5;
  int stride = 0;
  bool with_mask = true;
  bool without_mask = true;
  bool oracle = false;  // predictions := labels
  int threads = 1;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // per centre then combined, masked rows first
};

/// Throws ArchitectureMismatch if the parameters do not fit `desc`.
MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const NetworkDescriptor& desc,
                                  const std::vector<EvalCenter>& centers, const EvalOptions& opts);

const MetricsRow& find_row(const MetricsReport& report, const std::string& center, bool with_brain_mask);

}  // namespace mclab
