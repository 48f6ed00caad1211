#include "mclab/volume.hpp"

#include <algorithm>
#include <cmath>

#include "mclab/binio.hpp"
#include "mclab/error.hpp"

namespace mclab {

namespace {

void check_grid(Dims dims, const Spacing& spacing) {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) throw Error(ErrorCode::DimsMismatch, "dims must be positive");
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidSpacing, "spacing must be positive and finite");
  }
}

}  // namespace

Volume Volume::intensity(Dims dims, Spacing spacing, std::vector<float> values) {
  check_grid(dims, spacing);
  if (values.size() != dims.count()) throw Error(ErrorCode::DimsMismatch, "payload length does not match dims");
  Volume v;
  v.dims_ = dims;
  v.spacing_ = spacing;
  v.kind_ = VolumeKind::intensity;
  v.values_ = std::move(values);
  return v;
}

Volume Volume::intensity(Dims dims, Spacing spacing) {
  return intensity(dims, spacing, std::vector<float>(dims.count(), 0.0f));
}

Volume Volume::mask(Dims dims, Spacing spacing, std::vector<std::uint8_t> values) {
  check_grid(dims, spacing);
  if (values.size() != dims.count()) throw Error(ErrorCode::DimsMismatch, "payload length does not match dims");
  if (std::any_of(values.begin(), values.end(), [](std::uint8_t b) { return b > 1; })) {
    throw Error(ErrorCode::InvalidDtype, "mask values must be 0 or 1");
  }
  Volume v;
  v.dims_ = dims;
  v.spacing_ = spacing;
  v.kind_ = VolumeKind::mask;
  v.mask_ = std::move(values);
  return v;
}

Volume Volume::mask(Dims dims, Spacing spacing) {
  return mask(dims, spacing, std::vector<std::uint8_t>(dims.count(), 0));
}

std::size_t Volume::count_nonzero() const {
  if (is_mask()) return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
  return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](float f) { return f != 0.0f; }));
}

void check_same_dims(const Volume& a, const Volume& b, const char* what) {
  if (!(a.dims() == b.dims())) throw Error(ErrorCode::DimsMismatch, what);
}

Volume z_normalize(const Volume& v, const Volume& region) {
  check_same_dims(v, region, "z_normalize: image and region differ in dims");
  const auto vals = v.values();
  const auto reg = region.mask_values();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (reg[i]) {
      sum += vals[i];
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyRegion, "normalization region is empty");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (reg[i]) ss += (vals[i] - mean) * (vals[i] - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (sd < 1e-12) throw Error(ErrorCode::DegenerateIntensity, "constant intensity inside region");

  std::vector<float> out(vals.size(), 0.0f);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (reg[i]) out[i] = static_cast<float>((vals[i] - mean) / sd);
  }
  return Volume::intensity(v.dims(), v.spacing(), std::move(out));
}

Volume resample(const Volume& v, const Spacing& target) {
  for (double s : target) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidSpacing, "target spacing must be positive");
  }
  if (target == v.spacing()) return v;

  const Dims in = v.dims();
  const auto& sp = v.spacing();
  const int n_in[3] = {in.x, in.y, in.z};
  int n_out[3];
  for (int a = 0; a < 3; ++a) {
    n_out[a] = std::max(1, static_cast<int>(std::lround(n_in[a] * sp[a] / target[a])));
  }
  const Dims out{n_out[0], n_out[1], n_out[2]};

  // Continuous source index of an output voxel centre along one axis.
  auto source_coord = [&](int axis, int i) { return (i + 0.5) * target[axis] / sp[axis] - 0.5; };

  if (v.is_mask()) {
    std::vector<std::uint8_t> data(out.count());
    std::vector<int> map[3];
    for (int a = 0; a < 3; ++a) {
      map[a].resize(n_out[a]);
      for (int i = 0; i < n_out[a]; ++i) {
        const int j = static_cast<int>(std::floor(source_coord(a, i) + 0.5));
        map[a][i] = std::clamp(j, 0, n_in[a] - 1);
      }
    }
    std::size_t k = 0;
    for (int z = 0; z < out.z; ++z)
      for (int y = 0; y < out.y; ++y)
        for (int x = 0; x < out.x; ++x) data[k++] = v.mask_at(map[0][x], map[1][y], map[2][z]) ? 1 : 0;
    return Volume::mask(out, target, std::move(data));
  }

  struct Tap {
    int lo, hi;
    double w;  // weight of hi
  };
  std::vector<Tap> taps[3];
  for (int a = 0; a < 3; ++a) {
    taps[a].resize(n_out[a]);
    for (int i = 0; i < n_out[a]; ++i) {
      const double u = std::clamp(source_coord(a, i), 0.0, static_cast<double>(n_in[a] - 1));
      const int lo = static_cast<int>(std::floor(u));
      const int hi = std::min(lo + 1, n_in[a] - 1);
      taps[a][i] = {lo, hi, u - lo};
    }
  }
  std::vector<float> data(out.count());
  std::size_t k = 0;
  for (int z = 0; z < out.z; ++z) {
    const Tap tz = taps[2][z];
    for (int y = 0; y < out.y; ++y) {
      const Tap ty = taps[1][y];
      for (int x = 0; x < out.x; ++x) {
        const Tap tx = taps[0][x];
        auto lerp_x = [&](int yy, int zz) {
          return (1.0 - tx.w) * v.at(tx.lo, yy, zz) + tx.w * v.at(tx.hi, yy, zz);
        };
        const double c0 = (1.0 - ty.w) * lerp_x(ty.lo, tz.lo) + ty.w * lerp_x(ty.hi, tz.lo);
        const double c1 = (1.0 - ty.w) * lerp_x(ty.lo, tz.hi) + ty.w * lerp_x(ty.hi, tz.hi);
        data[k++] = static_cast<float>((1.0 - tz.w) * c0 + tz.w * c1);
      }
    }
  }
  return Volume::intensity(out, target, std::move(data));
}

std::vector<std::uint8_t> encode_volume(const Volume& v) {
  binio::Writer w;
  w.bytes("MCVL", 4);
  w.put<std::uint32_t>(kVolumeFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(v.dims().x));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(v.dims().y));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(v.dims().z));
  for (double s : v.spacing()) w.put<double>(s);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(v.kind()));
  const std::uint8_t reserved[3] = {0, 0, 0};
  w.bytes(reserved, 3);
  if (v.is_mask()) {
    w.bytes(v.mask_values().data(), v.mask_values().size());
  } else {
    w.bytes(v.values().data(), v.values().size() * sizeof(float));
  }
  return w.take();
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  char magic[4];
  if (bytes.size() < 4) throw Error(ErrorCode::BadMagic, "file too short for magic");
  r.bytes(magic, 4);
  if (std::string_view(magic, 4) != "MCVL") throw Error(ErrorCode::BadMagic, "expected MCVL");
  const auto version = r.get<std::uint32_t>();
  if (version != kVolumeFormatVersion) throw Error(ErrorCode::VersionMismatch, "unsupported MCVL version " + std::to_string(version));
  Dims dims;
  dims.x = static_cast<int>(r.get<std::uint32_t>());
  dims.y = static_cast<int>(r.get<std::uint32_t>());
  dims.z = static_cast<int>(r.get<std::uint32_t>());
  Spacing spacing;
  for (double& s : spacing) s = r.get<double>();
  const auto kind = r.get<std::uint8_t>();
  std::uint8_t reserved[3];
  r.bytes(reserved, 3);
  if (kind > 1) throw Error(ErrorCode::InvalidDtype, "unknown volume kind " + std::to_string(kind));

  const std::size_t n = dims.count();
  if (kind == static_cast<std::uint8_t>(VolumeKind::mask)) {
    if (r.remaining() < n) throw Error(ErrorCode::TruncatedPayload, "mask payload shorter than dims product");
    std::vector<std::uint8_t> data(n);
    r.bytes(data.data(), n);
    return Volume::mask(dims, spacing, std::move(data));
  }
  if (r.remaining() < n * sizeof(float)) throw Error(ErrorCode::TruncatedPayload, "intensity payload shorter than dims product");
  std::vector<float> data(n);
  r.bytes(data.data(), n * sizeof(float));
  return Volume::intensity(dims, spacing, std::move(data));
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_volume(v));
}

Volume read_volume(const std::filesystem::path& path) { return decode_volume(binio::read_file(path)); }

}  // namespace mclab
