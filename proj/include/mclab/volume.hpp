#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mclab {

struct Dims {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  bool operator==(const Dims&) const = default;
};

// Physical voxel size in mm along x, y, z.
using Spacing = std::array<double, 3>;

enum class VolumeKind : std::uint8_t { intensity = 0, mask = 1 };

/// A 3D scalar grid in x-fastest order. Intensity volumes hold f32 values,
/// mask volumes hold bytes restricted to {0, 1}. Values are fixed once the
/// volume is constructed.
class Volume {
 public:
  Volume() = default;

  static Volume intensity(Dims dims, Spacing spacing, std::vector<float> values);
  static Volume intensity(Dims dims, Spacing spacing);  // zero-filled
  static Volume mask(Dims dims, Spacing spacing, std::vector<std::uint8_t> values);
  static Volume mask(Dims dims, Spacing spacing);  // zero-filled

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  VolumeKind kind() const { return kind_; }
  bool is_mask() const { return kind_ == VolumeKind::mask; }
  std::size_t size() const { return dims_.count(); }

  std::span<const float> values() const { return values_; }
  std::span<const std::uint8_t> mask_values() const { return mask_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_.y + y) * dims_.x + x;
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.x && y < dims_.y && z < dims_.z;
  }
  float at(int x, int y, int z) const { return values_[index(x, y, z)]; }
  std::uint8_t mask_at(int x, int y, int z) const { return mask_[index(x, y, z)]; }

  std::size_t count_nonzero() const;

  bool same_grid(const Volume& other) const {
    return dims_ == other.dims_ && spacing_ == other.spacing_;
  }
  bool operator==(const Volume& other) const = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  VolumeKind kind_ = VolumeKind::intensity;
  std::vector<float> values_;
  std::vector<std::uint8_t> mask_;
};

/// One synthetic patient: T1CE-like image, lesion annotation, brain mask.
struct CaseRecord {
  std::string case_id;
  Volume image;
  Volume label;
  Volume brain_mask;
};

void check_same_dims(const Volume& a, const Volume& b, const char* what);

/// Z-score intensities over `region`; voxels outside the region become 0.
/// Uses the population standard deviation.
Volume z_normalize(const Volume& v, const Volume& region);

/// Resample onto a new voxel spacing. Output dims are round(extent / spacing)
/// so the physical extent is preserved within one voxel. Intensities use
/// trilinear interpolation, masks nearest neighbour.
Volume resample(const Volume& v, const Spacing& target_spacing);

// MCVL on-disk format, little-endian:
//   "MCVL" | u32 version=1 | u32 dims[3] | f64 spacing[3] | u8 kind | 3 zero bytes | payload
inline constexpr std::uint32_t kVolumeFormatVersion = 1;

std::vector<std::uint8_t> encode_volume(const Volume& v);
Volume decode_volume(std::span<const std::uint8_t> bytes);
void write_volume(const Volume& v, const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);

}  // namespace mclab
