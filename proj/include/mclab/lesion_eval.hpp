#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mclab/volume.hpp"

namespace mclab {

// ---------------------------------------------------------------------------
// Connected components

struct ComponentMap {
  Dims dims;
  Spacing spacing{1.0, 1.0, 1.0};
  std::vector<std::int32_t> labels;  // 0 background, 1..count lesion ids
  int count = 0;
  std::vector<std::vector<std::size_t>> voxel_lists;  // voxel_lists[id-1], ascending
};

/// Labels maximal connected sets of mask voxels. connectivity is 6, 18 or 26.
/// Ids follow raster order of each component's first voxel.
ComponentMap connected_components(const Volume& mask, int connectivity = 26);

// ---------------------------------------------------------------------------
// Lesion-wise detection

struct DetectionCounts {
  int tp_ref = 0;   // reference lesions overlapped by >= 1 predicted voxel
  int fn = 0;
  int tp_pred = 0;  // predicted components overlapping >= 1 reference voxel
  int fp = 0;
  int n_volumes = 0;
  std::vector<std::pair<int, int>> matches;  // (pred_id, ref_id), per volume only

  int n_ref() const { return tp_ref + fn; }
  int n_pred() const { return tp_pred + fp; }

  /// Cohort accumulation; matches are per-volume and are not carried over.
  DetectionCounts& operator+=(const DetectionCounts& other);
};

/// One-voxel-overlap matching; many-to-many overlaps are allowed.
DetectionCounts match_lesions(const ComponentMap& pred, const ComponentMap& ref);

struct DetectionMetrics {
  double sensitivity = 0.0;
  double precision = 0.0;
  double fpr = 0.0;  // false positives per volume
  double f1 = 0.0;
  double f2 = 0.0;
};

DetectionMetrics detection_metrics(const DetectionCounts& counts);

/// (1+b^2) s p / (b^2 p + s), 0 when the denominator is 0.
double f_beta(double sensitivity, double precision, double beta);

// ---------------------------------------------------------------------------
// Contouring

/// Mask voxels with at least one background face neighbour. Voxels outside
/// the grid count as background.
std::vector<std::uint8_t> boundary_voxels(const Volume& mask);

/// Squared Euclidean distance (mm^2) from every voxel to the nearest set
/// voxel of `features`, honouring anisotropic spacing. +inf when `features`
/// is empty. Separable lower-envelope transform, exact on the grid.
std::vector<double> squared_distance_to(const std::vector<std::uint8_t>& features, Dims dims, const Spacing& spacing);

double surface_dice(const Volume& pred, const Volume& ref, double tolerance_mm);
double hd95(const Volume& pred, const Volume& ref);
double volumetric_dice(const Volume& pred, const Volume& ref);

/// Linear interpolation between order statistics (numpy's default rule).
double percentile(std::vector<double> values, double q);

struct LesionContour {
  int ref_id = 0;
  double sdice = 0.0;
  double hd95 = 0.0;
  double dice = 0.0;
};

struct ContourMetrics {
  std::optional<double> sdice;  // absent when no reference lesion was detected
  std::optional<double> hd95_mm;
  std::optional<double> dice;
  std::vector<LesionContour> per_lesion;
};

/// Crop margin around each lesion's bounding box for per-lesion contouring.
inline constexpr int kContourCropMargin = 5;

/// Contour quality of every detected reference lesion against the union of
/// the predicted components matched to it.
ContourMetrics contour_metrics(const ComponentMap& pred, const ComponentMap& ref, const DetectionCounts& counts,
                               double tolerance_mm);
ContourMetrics contour_metrics(const Volume& pred, const ComponentMap& ref, const DetectionCounts& counts,
                               double tolerance_mm);

/// Mean over a list of per-lesion records.
ContourMetrics aggregate_contours(std::vector<LesionContour> per_lesion);

Volume apply_brain_mask(const Volume& pred, const Volume& brain);

// ---------------------------------------------------------------------------
// Statistics

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

/// Welch's unequal-variance t-test, two-sided p-value. Two constant, equal
/// samples give t = 0, p = 1.
TTestResult unpaired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mclab
