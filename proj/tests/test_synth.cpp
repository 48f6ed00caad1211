#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "mclab/error.hpp"
#include "mclab/synth.hpp"

using namespace mclab;

namespace {

CenterProfile small_profile() {
  CenterProfile p;
  p.name = "tiny";
  p.n_train = 2;
  p.n_val = 1;
  p.n_test = 2;
  p.dims = {24, 24, 20};
  p.seed = 99;
  p.distractor_rate = 1.0;
  p.slice_thickness_mm = 2.0;
  p.max_lesion_radius_mm = 4.0;
  return p;
}

Anatomy brain_for(const CenterProfile& p) {
  std::mt19937_64 rng(p.seed);
  return make_anatomy(p, rng);
}

ErrorCode profile_error(void (*edit)(CenterProfile&)) {
  CenterProfile p = small_profile();
  edit(p);
  try {
    p.validate();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

// Brain voxels with a face neighbour outside the brain (or outside the grid).
std::vector<std::uint8_t> shell_oracle(const Volume& brain) {
  const Dims d = brain.dims();
  std::vector<std::uint8_t> s(d.count(), 0);
  auto in = [&](int x, int y, int z) { return brain.contains(x, y, z) && brain.mask_at(x, y, z); };
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x)
        if (in(x, y, z) && (!in(x - 1, y, z) || !in(x + 1, y, z) || !in(x, y - 1, z) || !in(x, y + 1, z) ||
                            !in(x, y, z - 1) || !in(x, y, z + 1)))
          s[brain.index(x, y, z)] = 1;
  return s;
}

// Brute-force distance from a point to the nearest voxel outside the brain.
double distance_to_outside(const Volume& brain, const std::array<double, 3>& c) {
  const Dims d = brain.dims();
  double best = 1e18;
  for (int z = -1; z <= d.z; ++z)
    for (int y = -1; y <= d.y; ++y)
      for (int x = -1; x <= d.x; ++x) {
        if (brain.contains(x, y, z) && brain.mask_at(x, y, z)) continue;
        const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
  return std::sqrt(best);
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("profile validation") {
    CHECK(profile_error([](CenterProfile& p) { p.n_train = -1; }) == ErrorCode::ProfileInvalid);
    CHECK(profile_error([](CenterProfile& p) { p.lesion_density = 0; }) == ErrorCode::ProfileInvalid);
    CHECK(profile_error([](CenterProfile& p) { p.size_log_std = -0.1; }) == ErrorCode::ProfileInvalid);
    CHECK(profile_error([](CenterProfile& p) { p.slice_thickness_mm = 0.5; }) == ErrorCode::ProfileInvalid);
    CHECK(profile_error([](CenterProfile& p) { p.distractor_rate = -1; }) == ErrorCode::ProfileInvalid);
    CHECK(profile_error([](CenterProfile& p) { p.p_boundary = 1.5; }) == ErrorCode::ProfileInvalid);
    CHECK_NOTHROW(small_profile().validate());
    CHECK(spatial_mode_from_string("boundary") == SpatialMode::boundary);
    CHECK_THROWS_AS(spatial_mode_from_string("cortex"), Error);
    CHECK(split_from_string(to_string(Split::val)) == Split::val);
  }

  TEST_CASE("generate_center: determinism, unique ids, case invariants") {
    const CenterProfile p = small_profile();
    const CenterDataset a = generate_center(p);
    const CenterDataset b = generate_center(p);
    REQUIRE(a.train.size() == 2);
    REQUIRE(a.val.size() == 1);
    REQUIRE(a.test.size() == 2);
    std::set<std::string> ids;
    auto visit = [&](const std::vector<CaseRecord>& x, const std::vector<CaseRecord>& y, bool needs_lesion) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x[i].image == y[i].image);
        CHECK(x[i].label == y[i].label);
        CHECK(x[i].brain_mask == y[i].brain_mask);
        CHECK(ids.insert(x[i].case_id).second);
        CHECK(x[i].image.dims() == p.dims);
        for (std::size_t v = 0; v < x[i].label.size(); ++v)
          if (x[i].label.mask_values()[v]) CHECK(x[i].brain_mask.mask_values()[v] == 1);
        if (needs_lesion) CHECK(x[i].label.count_nonzero() > 0);
      }
    };
    visit(a.train, b.train, false);
    visit(a.val, b.val, true);
    visit(a.test, b.test, true);

    // Cases depend on (seed, id) only, not on how many cases precede them.
    CHECK(generate_case(p, Split::test, 1).image == a.test[1].image);
    CenterProfile other = p;
    other.seed = 100;
    CHECK(generate_case(other, Split::test, 1).image != a.test[1].image);
    CHECK(make_case_id("x", Split::val, 7) == "x-val-0007");
  }

  TEST_CASE("lesion counts follow density and preserve its ordering") {
    CenterProfile p = small_profile();
    p.dims = {40, 40, 36};
    p.size_log_mean = std::log(0.02);
    p.size_log_std = 0.5;
    const Anatomy anat = brain_for(p);
    auto mean_count = [&](double density) {
      p.lesion_density = density;
      std::mt19937_64 rng(1234);
      double total = 0;
      for (int c = 0; c < 100; ++c) total += static_cast<double>(place_lesions(anat.brain, p, rng, false).lesions.size());
      return total / 100.0;
    };
    const double low = mean_count(2.2), high = mean_count(12.2);
    CHECK(std::fabs(low - 2.2) <= 0.15 * 2.2);
    CHECK(std::fabs(high - 12.2) <= 0.15 * 12.2);
    CHECK(high > low);
  }

  TEST_CASE("boundary mode places centroids near the brain surface") {
    CenterProfile p = small_profile();
    p.dims = {32, 32, 28};
    p.spatial_mode = SpatialMode::boundary;
    const Anatomy anat = brain_for(p);
    std::mt19937_64 rng(5);
    int near = 0, total = 0;
    for (int c = 0; c < 100; ++c)
      for (const auto& l : place_lesions(anat.brain, p, rng, true).lesions) {
        ++total;
        near += distance_to_outside(anat.brain, l.centroid) <= 5.0;
      }
    REQUIRE(total >= 100);
    CHECK(near >= 0.8 * total);
  }

  TEST_CASE("parenchymal mode never touches the brain shell") {
    CenterProfile p = small_profile();
    p.dims = {32, 32, 28};
    p.lesion_density = 3.0;
    const Anatomy anat = brain_for(p);
    const auto shell = shell_oracle(anat.brain);
    std::mt19937_64 rng(6);
    std::size_t on_shell = 0, placed = 0;
    for (int c = 0; c < 100; ++c) {
      const auto out = place_lesions(anat.brain, p, rng, true);
      placed += out.lesions.size();
      for (std::size_t i = 0; i < shell.size(); ++i) on_shell += shell[i] && out.label.mask_values()[i];
    }
    CHECK(placed > 100);
    CHECK(on_shell == 0);
  }

  TEST_CASE("median lesion volume tracks the size law") {
    CenterProfile p;
    p.size_log_mean = std::log(0.13);
    p.size_log_std = 1.0;
    p.lesion_density = 5.0;
    p.spatial_mode = SpatialMode::mixed;
    p.seed = 3;
    const Anatomy anat = brain_for(p);
    std::mt19937_64 rng(7);
    std::vector<double> volumes;
    while (volumes.size() < 500)
      for (const auto& l : place_lesions(anat.brain, p, rng, false).lesions) volumes.push_back(l.volume_cm3);
    std::nth_element(volumes.begin(), volumes.begin() + volumes.size() / 2, volumes.end());
    const double median = volumes[volumes.size() / 2];
    CHECK(std::fabs(median - 0.13) <= 0.3 * 0.13);
  }

  TEST_CASE("placement gives up quietly when the brain is too small") {
    CenterProfile p = small_profile();
    p.lesion_density = 30.0;
    p.size_log_mean = std::log(0.05);
    std::vector<std::uint8_t> m(10 * 10 * 10, 0);
    for (int z = 4; z < 7; ++z)
      for (int y = 4; y < 7; ++y)
        for (int x = 4; x < 7; ++x) m[(z * 10 + y) * 10 + x] = 1;
    const Volume brain = Volume::mask({10, 10, 10}, {1, 1, 1}, m);
    std::mt19937_64 rng(8);
    const auto out = place_lesions(brain, p, rng, true);
    CHECK(static_cast<int>(out.lesions.size()) < out.drawn);
    CHECK_THROWS_AS(place_lesions(Volume::mask({4, 4, 4}, {1, 1, 1}), p, rng, true), Error);
  }

  TEST_CASE("anisotropy: identity, mass, variance, errors") {
    std::vector<float> v(6 * 5 * 20);
    std::mt19937_64 rng(9);
    for (auto& x : v) x = static_cast<float>(std::normal_distribution<double>(0, 1)(rng));
    const Volume img = Volume::intensity({6, 5, 20}, {1, 1, 1}, v);
    CHECK(simulate_anisotropy(img, 1.0) == img);

    std::vector<float> dot(4 * 4 * 20, 0.0f);
    dot[(12 * 4 + 1) * 4 + 2] = 1.0f;  // z = 12, the middle of the block 10..14
    const Volume spike = Volume::intensity({4, 4, 20}, {1, 1, 1}, dot);
    const Volume spread = simulate_anisotropy(spike, 5.0);
    CHECK(spread.dims() == spike.dims());
    CHECK(spread.spacing() == spike.spacing());
    double mass = 0;
    int touched = 0;
    for (float x : spread.values()) mass += x, touched += x != 0.0f;
    CHECK(std::fabs(mass - 1.0) < 1e-5);
    CHECK(spread.at(2, 1, 12) == doctest::Approx(0.2));
    CHECK(touched >= 5);
    for (int k = 1; k <= 7; ++k) CHECK(spread.at(2, 1, 12 + k) == doctest::Approx(spread.at(2, 1, 12 - k)));

    std::vector<float> alt(20);
    for (int z = 0; z < 20; ++z) alt[z] = z % 2 ? 1.0f : -1.0f;
    const Volume stripes = Volume::intensity({1, 1, 20}, {1, 1, 1}, alt);
    auto zvar = [](const Volume& x) {
      double s = 0, q = 0;
      for (float f : x.values()) s += f, q += double(f) * f;
      const double n = static_cast<double>(x.size());
      return q / n - (s / n) * (s / n);
    };
    CHECK(zvar(simulate_anisotropy(stripes, 2.0)) < zvar(stripes));

    double total_in = 0, total_out = 0;
    for (float f : img.values()) total_in += f;
    const Volume coarse = simulate_anisotropy(img, 4.0);
    for (float f : coarse.values()) total_out += f;
    CHECK(std::fabs(total_out - total_in) <= 1e-5 * std::max(1.0, std::fabs(total_in)) + 1e-4);

    CHECK_THROWS_AS(simulate_anisotropy(img, 0.5), Error);
    CHECK_THROWS_AS(simulate_anisotropy(Volume::mask({2, 2, 2}, {1, 1, 1}), 2.0), Error);
  }

  TEST_CASE("distractors: identity at rate 0, painted inside brain, intensity, keep-out") {
    CenterProfile p = small_profile();
    p.dims = {32, 32, 28};
    const Anatomy anat = brain_for(p);
    const Volume img = Volume::intensity(p.dims, p.spacing, std::vector<float>(p.dims.count(), 1.0f));
    std::mt19937_64 rng(10);
    const Volume keep = place_lesions(anat.brain, p, rng, true).label;
    const auto none = add_distractors(img, anat.brain, keep, 0.0, 2.0, rng);
    CHECK(none.image == img);
    CHECK(none.added.count_nonzero() == 0);

    std::size_t painted = 0;
    for (int c = 0; c < 20; ++c) {
      const auto r = add_distractors(img, anat.brain, keep, 5.0, 2.0, rng);
      painted += r.added.count_nonzero();
      for (std::size_t i = 0; i < img.size(); ++i) {
        if (!r.added.mask_values()[i]) {
          CHECK(r.image.values()[i] == 1.0f);
          continue;
        }
        CHECK(anat.brain.mask_values()[i] == 1);
        CHECK(keep.mask_values()[i] == 0);
        CHECK(std::fabs(r.image.values()[i] - 2.0) <= 0.2 * 2.0);
      }
    }
    CHECK(painted > 0);
    CHECK_THROWS_AS(add_distractors(img, anat.brain, keep, -1.0, 2.0, rng), Error);

    // Labels do not depend on the distractor rate.
    CenterProfile quiet = small_profile(), busy = small_profile();
    quiet.distractor_rate = 0.0;
    busy.distractor_rate = 5.0;
    CHECK(generate_case(quiet, Split::test, 0).label == generate_case(busy, Split::test, 0).label);
  }
}
