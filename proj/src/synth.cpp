#include "mclab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mclab/error.hpp"
#include "mclab/lesion_eval.hpp"

namespace mclab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

struct Ellipsoid {
  std::array<double, 3> center;  // voxel coordinates
  std::array<double, 3> semi;    // mm
};

template <class F>
void for_each_voxel(const Ellipsoid& e, const Volume& grid, F&& f) {
  const auto& sp = grid.spacing();
  const auto& d = grid.dims();
  int lo[3], hi[3];
  const int dim[3] = {d.x, d.y, d.z};
  for (int a = 0; a < 3; ++a) {
    const double ext = e.semi[a] / sp[a];
    lo[a] = std::max(0, static_cast<int>(std::floor(e.center[a] - ext)));
    hi[a] = std::min(dim[a] - 1, static_cast<int>(std::ceil(e.center[a] + ext)));
  }
  const int cx = static_cast<int>(std::lround(e.center[0]));
  const int cy = static_cast<int>(std::lround(e.center[1]));
  const int cz = static_cast<int>(std::lround(e.center[2]));
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) {
        const double u = (x - e.center[0]) * sp[0] / e.semi[0];
        const double v = (y - e.center[1]) * sp[1] / e.semi[1];
        const double w = (z - e.center[2]) * sp[2] / e.semi[2];
        if (u * u + v * v + w * w <= 1.0 || (x == cx && y == cy && z == cz)) f(x, y, z);
      }
}

std::vector<std::uint8_t> dilate26(const Volume& mask, int iterations) {
  const Dims d = mask.dims();
  std::vector<std::uint8_t> cur(mask.mask_values().begin(), mask.mask_values().end());
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::uint8_t> next = cur;
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x) {
          if (!cur[mask.index(x, y, z)]) continue;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx)
                if (mask.contains(x + dx, y + dy, z + dz)) next[mask.index(x + dx, y + dy, z + dz)] = 1;
        }
    cur = std::move(next);
  }
  return cur;
}

bool touches(const Volume& label, int x, int y, int z) {
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (label.contains(x + dx, y + dy, z + dz) && label.mask_at(x + dx, y + dy, z + dz)) return true;
  return false;
}

}  // namespace

std::string to_string(SpatialMode mode) {
  switch (mode) {
    case SpatialMode::parenchymal: return "parenchymal";
    case SpatialMode::boundary: return "boundary";
    case SpatialMode::mixed: return "mixed";
  }
  return "?";
}

SpatialMode spatial_mode_from_string(const std::string& s) {
  if (s == "parenchymal") return SpatialMode::parenchymal;
  if (s == "boundary") return SpatialMode::boundary;
  if (s == "mixed") return SpatialMode::mixed;
  throw Error(ErrorCode::ProfileInvalid, "unknown spatial_mode '" + s + "'");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::ProfileInvalid, "unknown split '" + s + "'");
}

void CenterProfile::validate() const {
  auto fail = [&](const std::string& why) { throw Error(ErrorCode::ProfileInvalid, "profile '" + name + "': " + why); };
  if (name.empty()) fail("empty name");
  if (n_train < 0 || n_val < 0 || n_test < 0) fail("negative split size");
  if (!(lesion_density > 0.0) || !std::isfinite(lesion_density)) fail("lesion_density must be > 0");
  if (!(size_log_std >= 0.0) || !std::isfinite(size_log_std) || !std::isfinite(size_log_mean))
    fail("invalid lesion size parameters");
  if (!(p_boundary >= 0.0 && p_boundary <= 1.0)) fail("p_boundary must lie in [0, 1]");
  if (!(distractor_rate >= 0.0) || !std::isfinite(distractor_rate)) fail("distractor_rate must be >= 0");
  if (!(contrast_gain > 0.0) || !std::isfinite(contrast_gain)) fail("contrast_gain must be > 0");
  if (dims.x < 8 || dims.y < 8 || dims.z < 8) fail("dims must be at least 8 per axis");
  for (double s : spacing)
    if (!(s > 0.0) || !std::isfinite(s)) fail("spacing must be positive");
  if (!(slice_thickness_mm >= spacing[2] - 1e-12)) fail("slice_thickness_mm below native z spacing");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (meninges_thickness < 0) fail("meninges_thickness must be >= 0");
  if (meninges_in_brain < 0) fail("meninges_in_brain must be >= 0");
  if (!(max_lesion_radius_mm > 0.0)) fail("max_lesion_radius_mm must be > 0");
}

std::mt19937_64 case_stream(std::uint64_t seed, const std::string& case_id) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ fnv1a(case_id)));
}

std::string make_case_id(const std::string& center, Split split, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return center + "-" + to_string(split) + "-" + buf;
}

std::vector<double> depth_in_mask(const Volume& mask) {
  std::vector<std::uint8_t> outside(mask.size());
  const auto m = mask.mask_values();
  for (std::size_t i = 0; i < m.size(); ++i) outside[i] = m[i] ? 0 : 1;
  // The grid border counts as outside: pad by one voxel.
  const Dims d = mask.dims();
  const Dims p{d.x + 2, d.y + 2, d.z + 2};
  std::vector<std::uint8_t> padded(p.count(), 1);
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x)
        padded[(static_cast<std::size_t>(z + 1) * p.y + (y + 1)) * p.x + (x + 1)] = outside[mask.index(x, y, z)];
  const auto sq = squared_distance_to(padded, p, Spacing{1.0, 1.0, 1.0});
  std::vector<double> depth(mask.size());
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x)
        depth[mask.index(x, y, z)] = std::sqrt(sq[(static_cast<std::size_t>(z + 1) * p.y + (y + 1)) * p.x + (x + 1)]);
  return depth;
}

Anatomy make_anatomy(const CenterProfile& profile, std::mt19937_64& rng) {
  const Dims d = profile.dims;
  const int dim[3] = {d.x, d.y, d.z};
  double c[3], a[3];
  for (int k = 0; k < 3; ++k) {
    c[k] = (dim[k] - 1) / 2.0 + uniform(rng, -1.0, 1.0);
    const double room = dim[k] / 2.0 - profile.meninges_thickness - 2.0;
    a[k] = std::max(2.0, room * uniform(rng, 0.9, 1.0));
  }
  Anatomy out{Volume::mask(d, profile.spacing), Volume::mask(d, profile.spacing)};
  std::vector<std::uint8_t> brain(d.count()), head(d.count());
  const double t = profile.meninges_thickness;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const double u = (x - c[0]) / a[0], v = (y - c[1]) / a[1], w = (z - c[2]) / a[2];
        const double uh = (x - c[0]) / (a[0] + t), vh = (y - c[1]) / (a[1] + t), wh = (z - c[2]) / (a[2] + t);
        const std::size_t i = out.brain.index(x, y, z);
        brain[i] = u * u + v * v + w * w <= 1.0;
        head[i] = brain[i] || uh * uh + vh * vh + wh * wh <= 1.0;
      }
  out.brain = Volume::mask(d, profile.spacing, std::move(brain));
  out.head = Volume::mask(d, profile.spacing, std::move(head));
  return out;
}

LesionPlacement place_lesions(const Volume& brain_mask, const CenterProfile& profile, std::mt19937_64& rng,
                              bool at_least_one) {
  constexpr int kRetryCap = 50;
  if (!brain_mask.is_mask()) throw Error(ErrorCode::InvalidDtype, "brain mask must be a mask volume");
  if (brain_mask.count_nonzero() == 0) throw Error(ErrorCode::EmptyRegion, "empty brain mask");
  const Dims d = brain_mask.dims();
  const auto& sp = brain_mask.spacing();
  const double voxel_cm3 = sp[0] * sp[1] * sp[2] / 1000.0;

  const auto depth = depth_in_mask(brain_mask);
  const auto shell = boundary_voxels(brain_mask);
  std::vector<std::array<int, 3>> inside, near_surface;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const std::size_t i = brain_mask.index(x, y, z);
        if (!brain_mask.mask_at(x, y, z)) continue;
        inside.push_back({x, y, z});
        if (depth[i] <= 3.0) near_surface.push_back({x, y, z});
      }

  LesionPlacement out{Volume::mask(d, sp), 0, {}};
  std::vector<std::uint8_t> label(d.count(), 0);
  Volume occupied = Volume::mask(d, sp);

  std::poisson_distribution<int> count_law(profile.lesion_density);
  std::lognormal_distribution<double> size_law(profile.size_log_mean, profile.size_log_std);
  int n = count_law(rng);
  if (at_least_one) n = std::max(n, 1);
  out.drawn = n;

  auto try_place = [&](bool boundary_lesion) -> bool {
    const double vol_mm3 = size_law(rng) * 1000.0;
    const double r = std::min(profile.max_lesion_radius_mm, std::cbrt(3.0 * vol_mm3 / (4.0 * std::numbers::pi)));
    const double e0 = uniform(rng, 0.8, 1.25), e1 = uniform(rng, 0.8, 1.25);
    const std::array<double, 3> semi{r * e0, r * e1, r / (e0 * e1)};
    const double min_sp = std::min({sp[0], sp[1], sp[2]});
    const double reach = std::max({semi[0], semi[1], semi[2]}) / min_sp;
    for (int attempt = 0; attempt < kRetryCap; ++attempt) {
      std::array<int, 3> c;
      if (boundary_lesion) {
        if (near_surface.empty()) return false;
        c = pick(near_surface, rng);
      } else {
        c = pick(inside, rng);
        if (depth[brain_mask.index(c[0], c[1], c[2])] <= reach + 1.0) continue;
      }
      const Ellipsoid e{{c[0] + uniform(rng, -0.5, 0.5), c[1] + uniform(rng, -0.5, 0.5), c[2] + uniform(rng, -0.5, 0.5)},
                        semi};
      std::vector<std::size_t> voxels;
      bool ok = true;
      for_each_voxel(e, brain_mask, [&](int x, int y, int z) {
        if (!ok) return;
        const std::size_t i = brain_mask.index(x, y, z);
        if (!brain_mask.mask_at(x, y, z)) {
          if (!boundary_lesion) ok = false;
          return;
        }
        if (!boundary_lesion && shell[i]) ok = false;
        if (touches(occupied, x, y, z)) ok = false;
        voxels.push_back(i);
      });
      if (!ok || voxels.empty()) continue;
      PlacedLesion lesion;
      for (std::size_t i : voxels) {
        label[i] = 1;
        const int x = static_cast<int>(i % d.x), y = static_cast<int>((i / d.x) % d.y), z = static_cast<int>(i / (static_cast<std::size_t>(d.x) * d.y));
        lesion.centroid[0] += x;
        lesion.centroid[1] += y;
        lesion.centroid[2] += z;
      }
      for (double& v : lesion.centroid) v /= static_cast<double>(voxels.size());
      lesion.voxels = voxels.size();
      lesion.volume_cm3 = static_cast<double>(voxels.size()) * voxel_cm3;
      out.lesions.push_back(lesion);
      occupied = Volume::mask(d, sp, label);
      return true;
    }
    return false;
  };

  auto boundary_draw = [&]() {
    switch (profile.spatial_mode) {
      case SpatialMode::parenchymal: return false;
      case SpatialMode::boundary: return true;
      case SpatialMode::mixed: return std::bernoulli_distribution(profile.p_boundary)(rng);
    }
    return false;
  };

  for (int k = 0; k < n; ++k) try_place(boundary_draw());
  for (int extra = 0; at_least_one && out.lesions.empty() && extra < kRetryCap; ++extra) try_place(boundary_draw());

  out.label = Volume::mask(d, sp, std::move(label));
  return out;
}

Volume simulate_anisotropy(const Volume& v, double slice_thickness_mm) {
  if (v.is_mask()) throw Error(ErrorCode::InvalidDtype, "anisotropy applies to intensity volumes");
  const double sz = v.spacing()[2];
  if (!(slice_thickness_mm >= sz - 1e-12) || !std::isfinite(slice_thickness_mm))
    throw Error(ErrorCode::InvalidThickness, "slice thickness below native z spacing");
  const int f = std::max(1, static_cast<int>(std::lround(slice_thickness_mm / sz)));
  if (f == 1) return v;
  const Dims d = v.dims();
  const int nc = (d.z + f - 1) / f;
  const std::size_t plane = static_cast<std::size_t>(d.x) * d.y;
  const auto in = v.values();
  std::vector<double> coarse(plane * nc, 0.0);
  for (int c = 0; c < nc; ++c) {
    const int z0 = c * f, z1 = std::min(d.z, z0 + f);
    for (int z = z0; z < z1; ++z)
      for (std::size_t p = 0; p < plane; ++p) coarse[c * plane + p] += in[z * plane + p];
    const double inv = 1.0 / (z1 - z0);
    for (std::size_t p = 0; p < plane; ++p) coarse[c * plane + p] *= inv;
  }
  std::vector<float> out(v.size());
  for (int z = 0; z < d.z; ++z) {
    const double u = std::clamp((z + 0.5) / f - 0.5, 0.0, static_cast<double>(nc - 1));
    const int c0 = static_cast<int>(std::floor(u));
    const int c1 = std::min(nc - 1, c0 + 1);
    const double w = u - c0;
    for (std::size_t p = 0; p < plane; ++p)
      out[z * plane + p] = static_cast<float>((1.0 - w) * coarse[c0 * plane + p] + w * coarse[c1 * plane + p]);
  }
  return Volume::intensity(d, v.spacing(), std::move(out));
}

DistractorResult add_distractors(const Volume& image, const Volume& brain_mask, const Volume& keep_out, double rate,
                                 double intensity, std::mt19937_64& rng) {
  if (!(rate >= 0.0)) throw Error(ErrorCode::ProfileInvalid, "distractor rate must be >= 0");
  check_same_dims(image, brain_mask, "distractor brain mask");
  check_same_dims(image, keep_out, "distractor keep-out mask");
  DistractorResult out{image, Volume::mask(image.dims(), image.spacing()), 0};
  if (rate == 0.0) return out;

  const Dims d = image.dims();
  const auto blocked = dilate26(keep_out, 2);
  const auto depth = depth_in_mask(brain_mask);
  std::vector<std::array<int, 3>> starts;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const std::size_t i = image.index(x, y, z);
        if (brain_mask.mask_at(x, y, z) && depth[i] >= 3.0 && !blocked[i]) starts.push_back({x, y, z});
      }
  if (starts.empty()) return out;

  std::vector<float> values(image.values().begin(), image.values().end());
  std::vector<std::uint8_t> added(image.size(), 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = std::poisson_distribution<int>(rate)(rng);
  for (int t = 0; t < n; ++t) {
    const auto s = pick(starts, rng);
    std::array<double, 3> p{static_cast<double>(s[0]), static_cast<double>(s[1]), static_cast<double>(s[2])};
    std::array<double, 3> dir{gauss(rng), gauss(rng), gauss(rng)};
    const double radius = uniform(rng, 1.0, 2.0);
    const double value = intensity * uniform(rng, 0.9, 1.1);
    const int steps = static_cast<int>(uniform(rng, 12.0, 28.0));
    const int reach = static_cast<int>(std::ceil(radius));
    for (int step = 0; step < steps; ++step) {
      double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      if (norm < 1e-9) norm = 1.0, dir = {1.0, 0.0, 0.0};
      for (double& c : dir) c /= norm;
      const int cx = static_cast<int>(std::lround(p[0])), cy = static_cast<int>(std::lround(p[1])),
                cz = static_cast<int>(std::lround(p[2]));
      for (int dz = -reach; dz <= reach; ++dz)
        for (int dy = -reach; dy <= reach; ++dy)
          for (int dx = -reach; dx <= reach; ++dx) {
            const int x = cx + dx, y = cy + dy, z = cz + dz;
            if (!image.contains(x, y, z)) continue;
            const double ex = x - p[0], ey = y - p[1], ez = z - p[2];
            if (ex * ex + ey * ey + ez * ez > radius * radius) continue;
            const std::size_t i = image.index(x, y, z);
            if (!brain_mask.mask_at(x, y, z) || blocked[i]) continue;
            values[i] = static_cast<float>(value);
            added[i] = 1;
          }
      for (int k = 0; k < 3; ++k) {
        p[k] += dir[k];
        dir[k] += 0.2 * gauss(rng);
      }
    }
    ++out.tubes;
  }
  out.image = Volume::intensity(d, image.spacing(), std::move(values));
  out.added = Volume::mask(d, image.spacing(), std::move(added));
  return out;
}

CaseRecord generate_case(const CenterProfile& profile, Split split, int index) {
  const std::string id = make_case_id(profile.name, split, index);
  auto rng = case_stream(profile.seed, id);
  const Dims d = profile.dims;
  const auto& sp = profile.spacing;

  Anatomy anatomy = make_anatomy(profile, rng);
  LesionPlacement lesions = place_lesions(anatomy.brain, profile, rng, split != Split::train);

  // Parenchyma with a faint low-frequency texture, enhancing meninges around it.
  double kx[2], ky[2], kz[2], ph[2];
  for (int k = 0; k < 2; ++k) {
    kx[k] = uniform(rng, 0.05, 0.25);
    ky[k] = uniform(rng, 0.05, 0.25);
    kz[k] = uniform(rng, 0.05, 0.25);
    ph[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  const auto depth = depth_in_mask(anatomy.brain);
  std::vector<float> img(d.count(), 0.0f);
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const std::size_t i = anatomy.brain.index(x, y, z);
        const bool in_brain = anatomy.brain.mask_values()[i];
        if (in_brain && depth[i] > profile.meninges_in_brain) {
          double v = 1.0;
          for (int k = 0; k < 2; ++k) v += 0.05 * std::sin(kx[k] * x + ky[k] * y + kz[k] * z + ph[k]);
          img[i] = static_cast<float>(v);
        } else if (in_brain || anatomy.head.mask_values()[i]) {
          img[i] = static_cast<float>(profile.meninges_gain);
        }
      }

  // Each lesion gets its own brightness; components of the label are the lesions.
  const ComponentMap comps = connected_components(lesions.label, 26);
  for (const auto& voxels : comps.voxel_lists) {
    const float value = static_cast<float>(profile.contrast_gain * uniform(rng, 0.9, 1.1));
    for (auto i : voxels) img[i] = value;
  }
  Volume image = Volume::intensity(d, sp, std::move(img));

  image = add_distractors(image, anatomy.brain, lesions.label, profile.distractor_rate, profile.contrast_gain, rng).image;
  image = simulate_anisotropy(image, profile.slice_thickness_mm);

  if (profile.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, profile.noise_std);
    std::vector<float> v(image.values().begin(), image.values().end());
    for (float& x : v) x += static_cast<float>(noise(rng));
    image = Volume::intensity(d, sp, std::move(v));
  }
  image = z_normalize(image, anatomy.head);

  return CaseRecord{id, std::move(image), std::move(lesions.label), std::move(anatomy.brain)};
}

CenterDataset generate_center(const CenterProfile& profile) {
  profile.validate();
  CenterDataset ds;
  ds.profile = profile;
  for (int i = 0; i < profile.n_train; ++i) ds.train.push_back(generate_case(profile, Split::train, i));
  for (int i = 0; i < profile.n_val; ++i) ds.val.push_back(generate_case(profile, Split::val, i));
  for (int i = 0; i < profile.n_test; ++i) ds.test.push_back(generate_case(profile, Split::test, i));
  return ds;
}

}  // namespace mclab
