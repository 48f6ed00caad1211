#include "mclab/lesion_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mclab/error.hpp"

namespace mclab {

DetectionCounts& DetectionCounts::operator+=(const DetectionCounts& other) {
  tp_ref += other.tp_ref;
  fn += other.fn;
  tp_pred += other.tp_pred;
  fp += other.fp;
  n_volumes += other.n_volumes;
  matches.clear();
  return *this;
}

DetectionCounts match_lesions(const ComponentMap& pred, const ComponentMap& ref) {
  if (!(pred.dims == ref.dims)) throw Error(ErrorCode::DimsMismatch, "match_lesions: prediction and reference differ in dims");
  std::set<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    if (pred.labels[i] > 0 && ref.labels[i] > 0) pairs.emplace(pred.labels[i], ref.labels[i]);
  }
  std::vector<char> ref_hit(ref.count + 1, 0), pred_hit(pred.count + 1, 0);
  for (const auto& [p, r] : pairs) {
    pred_hit[p] = 1;
    ref_hit[r] = 1;
  }
  DetectionCounts c;
  c.n_volumes = 1;
  for (int r = 1; r <= ref.count; ++r) (ref_hit[r] ? c.tp_ref : c.fn)++;
  for (int p = 1; p <= pred.count; ++p) (pred_hit[p] ? c.tp_pred : c.fp)++;
  c.matches.assign(pairs.begin(), pairs.end());
  return c;
}

double f_beta(double sensitivity, double precision, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + sensitivity;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * sensitivity * precision / denom;
}

DetectionMetrics detection_metrics(const DetectionCounts& c) {
  if (c.n_volumes < 1) throw Error(ErrorCode::NoVolumes, "detection metrics need at least one volume");
  DetectionMetrics m;
  m.sensitivity = c.n_ref() > 0 ? static_cast<double>(c.tp_ref) / c.n_ref() : 0.0;
  m.precision = c.n_pred() > 0 ? static_cast<double>(c.tp_pred) / c.n_pred() : 0.0;
  m.fpr = static_cast<double>(c.fp) / c.n_volumes;
  m.f1 = f_beta(m.sensitivity, m.precision, 1.0);
  m.f2 = f_beta(m.sensitivity, m.precision, 2.0);
  return m;
}

std::vector<std::uint8_t> boundary_voxels(const Volume& mask) {
  const Dims d = mask.dims();
  std::vector<std::uint8_t> out(d.count(), 0);
  const auto m = mask.mask_values();
  auto bg = [&](int x, int y, int z) { return !mask.contains(x, y, z) || !m[mask.index(x, y, z)]; };
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const std::size_t i = mask.index(x, y, z);
        if (!m[i]) continue;
        if (bg(x - 1, y, z) || bg(x + 1, y, z) || bg(x, y - 1, z) || bg(x, y + 1, z) || bg(x, y, z - 1) ||
            bg(x, y, z + 1)) {
          out[i] = 1;
        }
      }
  return out;
}

namespace {

void check_pair(const Volume& pred, const Volume& ref, const char* op) {
  if (!pred.same_grid(ref)) throw Error(ErrorCode::DimsMismatch, std::string(op) + ": masks differ in dims or spacing");
}

// Distances (mm) from each boundary voxel of `from` to the boundary of `to`.
std::vector<double> directed_boundary_distances(const std::vector<std::uint8_t>& from,
                                                const std::vector<double>& sq_to) {
  std::vector<double> out;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]) out.push_back(std::sqrt(sq_to[i]));
  }
  return out;
}

}  // namespace

double surface_dice(const Volume& pred, const Volume& ref, double tolerance_mm) {
  check_pair(pred, ref, "surface_dice");
  const auto bp = boundary_voxels(pred);
  const auto br = boundary_voxels(ref);
  const auto np = std::count(bp.begin(), bp.end(), 1);
  const auto nr = std::count(br.begin(), br.end(), 1);
  if (np + nr == 0) return 1.0;
  if (np == 0 || nr == 0) return 0.0;
  const auto to_ref = squared_distance_to(br, pred.dims(), pred.spacing());
  const auto to_pred = squared_distance_to(bp, pred.dims(), pred.spacing());
  // Small slack so exact ties at the tolerance survive rounding of the transform.
  const double limit = tolerance_mm + 1e-9;
  std::size_t within = 0;
  for (double d : directed_boundary_distances(bp, to_ref)) within += d <= limit;
  for (double d : directed_boundary_distances(br, to_pred)) within += d <= limit;
  return static_cast<double>(within) / static_cast<double>(np + nr);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::EmptyMask, "percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double hd95(const Volume& pred, const Volume& ref) {
  check_pair(pred, ref, "hd95");
  const auto bp = boundary_voxels(pred);
  const auto br = boundary_voxels(ref);
  if (std::count(bp.begin(), bp.end(), 1) == 0 || std::count(br.begin(), br.end(), 1) == 0) {
    throw Error(ErrorCode::EmptyMask, "hd95 needs two nonempty masks");
  }
  auto pooled = directed_boundary_distances(bp, squared_distance_to(br, pred.dims(), pred.spacing()));
  const auto back = directed_boundary_distances(br, squared_distance_to(bp, pred.dims(), pred.spacing()));
  pooled.insert(pooled.end(), back.begin(), back.end());
  return percentile(std::move(pooled), 95.0);
}

double volumetric_dice(const Volume& pred, const Volume& ref) {
  check_same_dims(pred, ref, "volumetric_dice: masks differ in dims");
  const auto p = pred.mask_values();
  const auto r = ref.mask_values();
  std::size_t np = 0, nr = 0, both = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    np += p[i];
    nr += r[i];
    both += p[i] & r[i];
  }
  if (np + nr == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + nr);
}

Volume apply_brain_mask(const Volume& pred, const Volume& brain) {
  check_same_dims(pred, brain, "apply_brain_mask: masks differ in dims");
  std::vector<std::uint8_t> out(pred.size());
  const auto p = pred.mask_values();
  const auto b = brain.mask_values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] & b[i];
  return Volume::mask(pred.dims(), pred.spacing(), std::move(out));
}

ContourMetrics aggregate_contours(std::vector<LesionContour> per_lesion) {
  ContourMetrics cm;
  cm.per_lesion = std::move(per_lesion);
  if (cm.per_lesion.empty()) return cm;
  double s = 0, h = 0, d = 0;
  for (const auto& l : cm.per_lesion) {
    s += l.sdice;
    h += l.hd95;
    d += l.dice;
  }
  const double n = static_cast<double>(cm.per_lesion.size());
  cm.sdice = s / n;
  cm.hd95_mm = h / n;
  cm.dice = d / n;
  return cm;
}

ContourMetrics contour_metrics(const ComponentMap& pred, const ComponentMap& ref, const DetectionCounts& counts,
                               double tolerance_mm) {
  if (!(pred.dims == ref.dims)) throw Error(ErrorCode::DimsMismatch, "contour_metrics: dims differ");
  const Dims d = ref.dims;
  std::map<int, std::vector<int>> preds_of_ref;
  for (const auto& [p, r] : counts.matches) preds_of_ref[r].push_back(p);

  std::vector<LesionContour> out;
  for (const auto& [ref_id, pred_ids] : preds_of_ref) {
    // Bounding box of the lesion and its matched predictions, so the crop
    // never cuts a contour.
    int lo[3] = {d.x, d.y, d.z}, hi[3] = {-1, -1, -1};
    auto grow = [&](std::size_t i) {
      const int c[3] = {static_cast<int>(i % d.x), static_cast<int>((i / d.x) % d.y),
                        static_cast<int>(i / (static_cast<std::size_t>(d.x) * d.y))};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
    };
    for (auto i : ref.voxel_lists[ref_id - 1]) grow(i);
    for (int p : pred_ids)
      for (auto i : pred.voxel_lists[p - 1]) grow(i);
    const int full[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, lo[a] - kContourCropMargin);
      hi[a] = std::min(full[a] - 1, hi[a] + kContourCropMargin);
    }
    const Dims cd{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    std::vector<std::uint8_t> rm(cd.count(), 0), pm(cd.count(), 0);
    std::set<int> pset(pred_ids.begin(), pred_ids.end());
    std::size_t k = 0;
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x, ++k) {
          const std::size_t i = (static_cast<std::size_t>(z) * d.y + y) * d.x + x;
          rm[k] = ref.labels[i] == ref_id;
          pm[k] = pred.labels[i] > 0 && pset.count(pred.labels[i]) > 0;
        }
    const Volume rv = Volume::mask(cd, ref.spacing, std::move(rm));
    const Volume pv = Volume::mask(cd, ref.spacing, std::move(pm));
    out.push_back({ref_id, surface_dice(pv, rv, tolerance_mm), hd95(pv, rv), volumetric_dice(pv, rv)});
  }
  return aggregate_contours(std::move(out));
}

ContourMetrics contour_metrics(const Volume& pred, const ComponentMap& ref, const DetectionCounts& counts,
                               double tolerance_mm) {
  return contour_metrics(connected_components(pred), ref, counts, tolerance_mm);
}

}  // namespace mclab
