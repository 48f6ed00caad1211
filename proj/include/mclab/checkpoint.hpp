#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mclab/tinynet.hpp"

namespace mclab {

struct ProvenanceEntry {
  std::string center;
  std::string strategy;
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  bool operator==(const ProvenanceEntry&) const = default;
};

/// Trained weights plus their history. Optimizer moments are not persisted;
/// every hop starts a fresh optimizer.
struct Checkpoint {
  ParamSet params;
  std::vector<ProvenanceEntry> provenance;
  double best_val_dice = 0.0;
};

/// MCKP layout (little-endian): "MCKP", u32 version, 32-byte architecture
/// digest, u32 tensor count, then per tensor {str name, u32 rank, u32 dims[],
/// f32 values}, u32 provenance count with {str center, str strategy, u64 seed,
/// u32 epoch} entries, and f64 best validation Dice.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt, const NetworkDescriptor& desc);

/// Throws ArchitectureMismatch when the stored digest or any tensor layout
/// differs from `desc`.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const NetworkDescriptor& desc);

void write_checkpoint(const Checkpoint& ckpt, const NetworkDescriptor& desc, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path, const NetworkDescriptor& desc);

}  // namespace mclab
