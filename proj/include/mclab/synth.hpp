#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mclab/volume.hpp"

namespace mclab {

enum class SpatialMode { parenchymal, boundary, mixed };

std::string to_string(SpatialMode mode);
SpatialMode spatial_mode_from_string(const std::string& s);

/// Generative description of one synthetic centre. The heterogeneity knobs
/// are lesion density and size, lesion location (interior vs. near the brain
/// surface), through-plane resolution, enhancing vessel-like distractors and
/// contrast. The remaining fields set the grid and the background appearance.
struct CenterProfile {
  std::string name = "center";
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  double lesion_density = 2.2;       // mean lesions per case
  double size_log_mean = -2.0;       // log of lesion volume in cm^3
  double size_log_std = 1.0;
  SpatialMode spatial_mode = SpatialMode::parenchymal;
  double p_boundary = 0.5;           // used by SpatialMode::mixed
  double slice_thickness_mm = 1.0;
  double distractor_rate = 0.0;      // mean vessel-like tubes per case
  double contrast_gain = 2.0;        // lesion / parenchyma intensity
  std::uint64_t seed = 1;

  Dims dims{64, 64, 48};
  Spacing spacing{1.0, 1.0, 1.0};
  double noise_std = 0.08;
  double meninges_gain = 1.3;        // enhancement of the layer around the brain
  int meninges_thickness = 2;        // voxels outside the brain mask
  int meninges_in_brain = 0;         // enhancing layer depth inside the brain mask
  double max_lesion_radius_mm = 8.0;

  void validate() const;
};

struct CenterDataset {
  CenterProfile profile;
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> val;
  std::vector<CaseRecord> test;
};

enum class Split { train, val, test };
std::string to_string(Split split);
Split split_from_string(const std::string& s);

/// Per-case random stream derived from (seed, case_id) so cases can be
/// generated in any order or in parallel with identical results.
std::mt19937_64 case_stream(std::uint64_t seed, const std::string& case_id);

std::string make_case_id(const std::string& center, Split split, int index);

struct PlacedLesion {
  std::array<double, 3> centroid;  // voxel coordinates of the rasterised lesion
  std::size_t voxels = 0;
  double volume_cm3 = 0.0;
};

struct LesionPlacement {
  Volume label;
  int drawn = 0;  // count drawn from the Poisson law (after the >= 1 rule)
  std::vector<PlacedLesion> lesions;
};

/// Ellipsoidal lesions clipped to the brain mask. A lesion that collides with
/// an earlier one (or, in parenchymal mode, touches the brain surface) is
/// re-drawn up to a retry cap and then skipped.
LesionPlacement place_lesions(const Volume& brain_mask, const CenterProfile& profile, std::mt19937_64& rng,
                              bool at_least_one);

/// Through-plane degradation: mean pooling along z to the slice thickness,
/// then linear interpolation back onto the original grid.
Volume simulate_anisotropy(const Volume& v, double slice_thickness_mm);

struct DistractorResult {
  Volume image;
  Volume added;  // mask of voxels painted by distractors
  int tubes = 0;
};

/// Paints bright curvilinear tubes (persistent random-walk centre lines,
/// radius 1-2 voxels) at lesion-like intensity inside the brain, away from
/// the voxels flagged in `keep_out`.
DistractorResult add_distractors(const Volume& image, const Volume& brain_mask, const Volume& keep_out, double rate,
                                 double intensity, std::mt19937_64& rng);

/// Brain ellipsoid with mild random eccentricity; `head` adds the meninges layer.
struct Anatomy {
  Volume brain;
  Volume head;
};
Anatomy make_anatomy(const CenterProfile& profile, std::mt19937_64& rng);

CaseRecord generate_case(const CenterProfile& profile, Split split, int index);
CenterDataset generate_center(const CenterProfile& profile);

/// Distance (in voxels) from each brain voxel to the nearest non-brain voxel.
std::vector<double> depth_in_mask(const Volume& mask);

}  // namespace mclab
