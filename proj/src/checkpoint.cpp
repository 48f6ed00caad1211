#include "mclab/checkpoint.hpp"

#include <cstring>

#include "mclab/binio.hpp"
#include "mclab/error.hpp"

namespace mclab {

namespace {
constexpr char kMagic[4] = {'M', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt, const NetworkDescriptor& desc) {
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  const auto digest = desc.digest();
  w.bytes(digest.data(), digest.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.tensors.size()));
  for (std::size_t i = 0; i < ckpt.params.tensors.size(); ++i) {
    const auto& t = ckpt.params.tensors[i];
    w.str(ckpt.params.names[i]);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->shape.size()));
    for (int s : t->shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
    for (double v : t->value) w.put<float>(static_cast<float>(v));
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.provenance.size()));
  for (const auto& p : ckpt.provenance) {
    w.str(p.center);
    w.str(p.strategy);
    w.put<std::uint64_t>(p.seed);
    w.put<std::uint32_t>(p.epoch);
  }
  w.put<double>(ckpt.best_val_dice);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const NetworkDescriptor& desc) {
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a checkpoint file");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion)
    throw Error(ErrorCode::VersionMismatch, "unsupported checkpoint version " + std::to_string(v));
  std::array<std::uint8_t, 32> digest;
  r.bytes(digest.data(), digest.size());
  if (digest != desc.digest())
    throw Error(ErrorCode::ArchitectureMismatch, "checkpoint was written for a different network architecture");

  // The reference layout comes from a fresh initialisation of the same descriptor.
  Checkpoint ckpt;
  ckpt.params = init_params(desc, 0);
  const auto n = r.get<std::uint32_t>();
  if (n != ckpt.params.tensors.size()) throw Error(ErrorCode::ArchitectureMismatch, "tensor count differs");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& t = ckpt.params.tensors[i];
    if (r.str() != ckpt.params.names[i]) throw Error(ErrorCode::ArchitectureMismatch, "tensor name differs");
    const auto rank = r.get<std::uint32_t>();
    if (rank != t->shape.size()) throw Error(ErrorCode::ArchitectureMismatch, "tensor rank differs");
    for (std::uint32_t k = 0; k < rank; ++k)
      if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(t->shape[k]))
        throw Error(ErrorCode::ArchitectureMismatch, "tensor shape differs");
    for (double& v : t->value) v = r.get<float>();
  }
  const auto np = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < np; ++i) {
    ProvenanceEntry p;
    p.center = r.str();
    p.strategy = r.str();
    p.seed = r.get<std::uint64_t>();
    p.epoch = r.get<std::uint32_t>();
    ckpt.provenance.push_back(std::move(p));
  }
  ckpt.best_val_dice = r.get<double>();
  if (r.remaining() != 0) throw Error(ErrorCode::TruncatedPayload, "trailing bytes after checkpoint");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const NetworkDescriptor& desc, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_checkpoint(ckpt, desc));
}

Checkpoint read_checkpoint(const std::filesystem::path& path, const NetworkDescriptor& desc) {
  return decode_checkpoint(binio::read_file(path), desc);
}

}  // namespace mclab
