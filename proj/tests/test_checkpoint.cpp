#include <filesystem>

#include "doctest.h"
#include "mclab/binio.hpp"
#include "mclab/checkpoint.hpp"
#include "mclab/error.hpp"

using namespace mclab;

namespace {

Checkpoint sample_checkpoint(const NetworkDescriptor& d) {
  Checkpoint c{init_params(d, 5), {{"alpha", "single", 3, 0}, {"alpha", "single", 3, 1}, {"beta", "lwf", 3, 0}}, 0.625};
  c.params.round_to_f32();
  return c;
}

ErrorCode decode_error(std::span<const std::uint8_t> bytes, const NetworkDescriptor& d) {
  try {
    decode_checkpoint(bytes, d);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("byte layout") {
    const auto d = NetworkDescriptor::compact();
    const Checkpoint c = sample_checkpoint(d);
    const auto bytes = encode_checkpoint(c, d);
    binio::Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    CHECK(std::string(magic, 4) == "MCKP");
    CHECK(r.get<std::uint32_t>() == 1);
    std::array<std::uint8_t, 32> digest;
    r.bytes(digest.data(), 32);
    CHECK(digest == d.digest());
    CHECK(r.get<std::uint32_t>() == c.params.tensors.size());
    CHECK(r.str() == c.params.names[0]);
    const auto rank = r.get<std::uint32_t>();
    CHECK(rank == 5);
    for (std::uint32_t k = 0; k < rank; ++k) CHECK(r.get<std::uint32_t>() == static_cast<std::uint32_t>(c.params.tensors[0]->shape[k]));
    CHECK(r.get<float>() == static_cast<float>(c.params.tensors[0]->value[0]));

    std::size_t expected = 4 + 4 + 32 + 4;
    for (std::size_t i = 0; i < c.params.tensors.size(); ++i)
      expected += 4 + c.params.names[i].size() + 4 + 4 * c.params.tensors[i]->shape.size() + 4 * c.params.tensors[i]->numel();
    expected += 4;
    for (const auto& p : c.provenance) expected += 4 + p.center.size() + 4 + p.strategy.size() + 8 + 4;
    expected += 8;
    CHECK(bytes.size() == expected);
  }

  TEST_CASE("round trip through a file") {
    const auto d = NetworkDescriptor::compact();
    const Checkpoint c = sample_checkpoint(d);
    const auto dir = std::filesystem::temp_directory_path() / "mclab_tests";
    std::filesystem::create_directories(dir);
    write_checkpoint(c, d, dir / "c.mckp");
    const Checkpoint back = read_checkpoint(dir / "c.mckp", d);
    CHECK(back.params.flatten() == c.params.flatten());
    CHECK(back.params.names == c.params.names);
    CHECK(back.provenance == c.provenance);
    CHECK(back.best_val_dice == 0.625);
    CHECK(encode_checkpoint(back, d) == encode_checkpoint(c, d));
  }

  TEST_CASE("architecture and format errors") {
    const auto small = NetworkDescriptor::compact();
    const NetworkDescriptor big;
    const auto bytes = encode_checkpoint(sample_checkpoint(small), small);
    CHECK(decode_error(bytes, big) == ErrorCode::ArchitectureMismatch);
    NetworkDescriptor wider = small;
    wider.fusion_width = 5;
    CHECK(decode_error(bytes, wider) == ErrorCode::ArchitectureMismatch);

    auto bad = bytes;
    bad[1] = 'X';
    CHECK(decode_error(bad, small) == ErrorCode::BadMagic);
    bad = bytes;
    bad[4] = 9;
    CHECK(decode_error(bad, small) == ErrorCode::VersionMismatch);
    bad = bytes;
    bad.pop_back();
    CHECK(decode_error(bad, small) == ErrorCode::TruncatedPayload);
    bad = bytes;
    bad.push_back(0);
    CHECK(decode_error(bad, small) == ErrorCode::TruncatedPayload);
    // A tensor name that does not belong to the architecture.
    bad = bytes;
    bad[4 + 4 + 32 + 4 + 4] ^= 0x20;
    CHECK(decode_error(bad, small) == ErrorCode::ArchitectureMismatch);
    try {
      read_checkpoint(std::filesystem::temp_directory_path() / "mclab_tests" / "missing.mckp", small);
      FAIL("expected Io");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Io);
    }
  }
}
