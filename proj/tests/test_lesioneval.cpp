#include <random>

#include "doctest.h"
#include "mclab/error.hpp"
#include "mclab/lesion_eval.hpp"
#include "oracles.hpp"

using namespace mclab;

namespace {

Volume mask_with(Dims d, Spacing s, std::initializer_list<std::array<int, 3>> voxels) {
  std::vector<std::uint8_t> v(d.count(), 0);
  for (const auto& p : voxels) v[(static_cast<std::size_t>(p[2]) * d.y + p[1]) * d.x + p[0]] = 1;
  return Volume::mask(d, s, std::move(v));
}

Volume box(Dims d, std::array<int, 3> lo, std::array<int, 3> hi, Spacing s = {1, 1, 1}) {
  std::vector<std::uint8_t> v(d.count(), 0);
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) v[(static_cast<std::size_t>(z) * d.y + y) * d.x + x] = 1;
  return Volume::mask(d, s, std::move(v));
}

Volume unite(const Volume& a, const Volume& b) {
  std::vector<std::uint8_t> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.mask_values()[i] | b.mask_values()[i];
  return Volume::mask(a.dims(), a.spacing(), std::move(v));
}

DetectionCounts counts_of(const Volume& pred, const Volume& ref) {
  return match_lesions(connected_components(pred), connected_components(ref));
}

}  // namespace

TEST_SUITE("lesioneval") {
  TEST_CASE("connected components: adjacency variants") {
    const Dims d{6, 6, 6};
    CHECK(connected_components(Volume::mask(d, {1, 1, 1})).count == 0);
    const Volume one = mask_with(d, {1, 1, 1}, {{2, 3, 4}});
    const auto c1 = connected_components(one);
    CHECK(c1.count == 1);
    CHECK(c1.voxel_lists[0].size() == 1);

    const Volume corner = unite(box(d, {0, 0, 0}, {1, 1, 1}), box(d, {2, 2, 2}, {3, 3, 3}));
    CHECK(connected_components(corner, 26).count == 1);
    CHECK(connected_components(corner, 18).count == 2);
    CHECK(connected_components(corner, 6).count == 2);
    const Volume edge = unite(box(d, {0, 0, 0}, {1, 1, 1}), box(d, {2, 2, 0}, {3, 3, 1}));
    CHECK(connected_components(edge, 18).count == 1);
    CHECK(connected_components(edge, 6).count == 2);

    // Ids follow raster order of first voxels.
    const Volume two = mask_with(d, {1, 1, 1}, {{5, 0, 0}, {0, 1, 0}});
    const auto c2 = connected_components(two);
    CHECK(c2.labels[two.index(5, 0, 0)] == 1);
    CHECK(c2.labels[two.index(0, 1, 0)] == 2);
  }

  TEST_CASE("matching: one voxel overlap, disjoint, many-to-many") {
    const Dims d{12, 12, 12};
    const Volume ref = box(d, {2, 2, 2}, {4, 4, 4});
    const Volume touch = box(d, {4, 4, 4}, {7, 7, 7});
    auto c = counts_of(touch, ref);
    CHECK(c.tp_ref == 1);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);

    c = counts_of(box(d, {8, 8, 8}, {9, 9, 9}), ref);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tp_ref == 0);

    const Volume refs = unite(box(d, {0, 0, 0}, {1, 1, 1}), box(d, {5, 5, 5}, {6, 6, 6}));
    c = counts_of(box(d, {0, 0, 0}, {6, 6, 6}), refs);
    CHECK(c.tp_ref == 2);
    CHECK(c.tp_pred == 1);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);

    CHECK_THROWS_AS(match_lesions(connected_components(Volume::mask({3, 3, 3}, {1, 1, 1})), connected_components(ref)),
                    Error);
  }

  TEST_CASE("matching: count conservation on random pairs") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 30; ++t) {
      const Volume p = oracle::random_mask({14, 14, 14}, {1, 1, 1}, rng);
      const Volume r = oracle::random_mask({14, 14, 14}, {1, 1, 1}, rng);
      const auto pc = connected_components(p), rc = connected_components(r);
      const auto c = match_lesions(pc, rc);
      CHECK(c.tp_ref + c.fn == rc.count);
      CHECK(c.tp_pred + c.fp == pc.count);
      // Brute-force overlap enumeration.
      int tp_ref = 0;
      for (const auto& voxels : rc.voxel_lists)
        tp_ref += std::any_of(voxels.begin(), voxels.end(), [&](std::size_t i) { return p.mask_values()[i] != 0; });
      CHECK(c.tp_ref == tp_ref);
    }
  }

  TEST_CASE("detection metrics and conventions") {
    DetectionCounts c;
    c.tp_ref = 3;
    c.fn = 1;
    c.n_volumes = 2;
    c.fp = 5;
    const auto m = detection_metrics(c);
    CHECK(m.sensitivity == 0.75);
    CHECK(m.fpr == 2.5);
    CHECK(m.precision == 0.0);
    DetectionCounts empty;
    empty.n_volumes = 1;
    CHECK(detection_metrics(empty).precision == 0.0);
    CHECK(detection_metrics(empty).sensitivity == 0.0);
    try {
      detection_metrics(DetectionCounts{});
      FAIL("expected NoVolumes");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoVolumes);
    }
  }

  TEST_CASE("f_beta: table values, symmetry, harmonic mean, monotonicity") {
    CHECK(f_beta(0.854, 0.900, 1) == doctest::Approx(0.876).epsilon(0).scale(1).epsilon(0.0005 / 0.876));
    CHECK(std::fabs(f_beta(0.854, 0.900, 1) - 0.876) <= 0.0005);
    CHECK(std::fabs(f_beta(0.854, 0.900, 2) - 0.863) <= 0.0005);
    for (double p : {0.0, 0.3, 1.0})
      for (double b : {0.5, 1.0, 2.0}) CHECK(f_beta(p, p, b) == doctest::Approx(p));
    CHECK(f_beta(0.0, 0.0, 1.0) == 0.0);
    for (double s = 0.05; s < 1.0; s += 0.1)
      for (double p = 0.05; p < 1.0; p += 0.1) {
        CHECK(f_beta(s, p, 1) == doctest::Approx(2 * s * p / (s + p)));
        CHECK(f_beta(s + 0.05, p, 2) >= f_beta(s, p, 2));
        CHECK(f_beta(s, p + 0.05, 2) >= f_beta(s, p, 2));
      }
  }

  TEST_CASE("surface dice and hd95: fixed cases") {
    const Dims d{12, 12, 12};
    const Volume a = box(d, {2, 2, 2}, {6, 6, 6});
    CHECK(surface_dice(a, a, 1.0) == 1.0);
    CHECK(hd95(a, a) == 0.0);
    CHECK(surface_dice(box(d, {0, 0, 0}, {1, 1, 1}), box(d, {9, 9, 9}, {11, 11, 11}), 1.0) == 0.0);
    const Volume shifted = box(d, {3, 2, 2}, {7, 6, 6});
    CHECK(surface_dice(a, shifted, 1.0) == doctest::Approx(oracle::surface_dice(a, shifted, 1.0)).epsilon(1e-12));
    CHECK(hd95(mask_with(d, {1, 1, 1}, {{1, 1, 1}}), mask_with(d, {1, 1, 1}, {{4, 1, 1}})) == doctest::Approx(3.0));
    const Volume none = Volume::mask(d, {1, 1, 1});
    CHECK(surface_dice(none, none, 1.0) == 1.0);
    CHECK(surface_dice(a, none, 1.0) == 0.0);
    CHECK_THROWS_AS(hd95(a, none), Error);
    CHECK(volumetric_dice(a, a) == 1.0);
    CHECK(volumetric_dice(none, none) == 1.0);
    CHECK(volumetric_dice(box(d, {0, 0, 0}, {1, 1, 1}), box(d, {0, 0, 1}, {1, 1, 2})) == 0.5);
  }

  TEST_CASE("surface dice and hd95 agree with the pairwise oracle, anisotropic too") {
    std::mt19937_64 rng(2024);
    for (int t = 0; t < 20; ++t) {
      const Spacing s = t % 2 ? Spacing{1, 1, 2} : Spacing{1, 1, 1};
      const Volume p = oracle::random_mask({16, 16, 16}, s, rng);
      const Volume r = oracle::random_mask({16, 16, 16}, s, rng);
      for (double tau : {0.0, 1.0, 2.0}) {
        CHECK(std::fabs(surface_dice(p, r, tau) - oracle::surface_dice(p, r, tau)) < 1e-9);
        CHECK(surface_dice(p, r, tau) == doctest::Approx(surface_dice(r, p, tau)));
      }
      CHECK(std::fabs(hd95(p, r) - oracle::hd95(p, r)) < 1e-9);
      CHECK(hd95(p, r) == doctest::Approx(hd95(r, p)));
    }
  }

  TEST_CASE("percentile follows linear interpolation") {
    CHECK(percentile({1, 2, 3, 4}, 50) == doctest::Approx(2.5));
    CHECK(percentile({0, 10}, 95) == doctest::Approx(9.5));
    CHECK(percentile({7}, 95) == 7.0);
  }

  TEST_CASE("contour metrics: crop matches uncropped single-lesion oracle") {
    const Dims d{30, 30, 30};
    const Volume ref = unite(box(d, {3, 3, 3}, {7, 8, 6}), box(d, {18, 18, 18}, {22, 22, 22}));
    // First lesion predicted shifted by one voxel, second missed, plus a false positive.
    const Volume pred_lesion = box(d, {4, 3, 3}, {8, 8, 6});
    const Volume pred = unite(pred_lesion, box(d, {26, 2, 2}, {27, 3, 3}));
    const auto rc = connected_components(ref);
    const auto pc = connected_components(pred);
    const auto counts = match_lesions(pc, rc);
    const auto cm = contour_metrics(pc, rc, counts, 1.0);
    REQUIRE(cm.per_lesion.size() == 1);
    const Volume ref_lesion = box(d, {3, 3, 3}, {7, 8, 6});
    CHECK(*cm.sdice == doctest::Approx(oracle::surface_dice(pred_lesion, ref_lesion, 1.0)).epsilon(1e-12));
    CHECK(*cm.hd95_mm == doctest::Approx(oracle::hd95(pred_lesion, ref_lesion)).epsilon(1e-12));
    CHECK(*cm.dice == doctest::Approx(volumetric_dice(pred_lesion, ref_lesion)));

    const auto perfect = contour_metrics(rc, rc, match_lesions(rc, rc), 1.0);
    CHECK(*perfect.sdice == 1.0);
    CHECK(*perfect.hd95_mm == 0.0);

    const Volume nothing = Volume::mask(d, {1, 1, 1});
    const auto missed = contour_metrics(nothing, rc, match_lesions(connected_components(nothing), rc), 1.0);
    CHECK(!missed.sdice.has_value());
    CHECK(!missed.hd95_mm.has_value());
    CHECK(missed.per_lesion.empty());
  }

  TEST_CASE("brain mask filtering") {
    const Dims d{10, 10, 10};
    const Volume brain = box(d, {0, 0, 0}, {4, 9, 9});
    const Volume inside = box(d, {1, 1, 1}, {2, 2, 2});
    CHECK(apply_brain_mask(inside, brain) == inside);
    CHECK(apply_brain_mask(box(d, {6, 0, 0}, {9, 3, 3}), brain).count_nonzero() == 0);
    const Volume straddle = box(d, {3, 5, 5}, {6, 6, 6});
    const Volume kept = apply_brain_mask(straddle, brain);
    for (std::size_t i = 0; i < kept.size(); ++i)
      CHECK(kept.mask_values()[i] == (straddle.mask_values()[i] & brain.mask_values()[i]));
    CHECK_THROWS_AS(apply_brain_mask(inside, Volume::mask({9, 10, 10}, {1, 1, 1})), Error);

    // Removing only false positives never lowers precision or changes sensitivity.
    const Volume ref = box(d, {1, 1, 1}, {2, 2, 2});
    const Volume pred = unite(inside, box(d, {7, 7, 7}, {8, 8, 8}));
    const auto raw = detection_metrics(counts_of(pred, ref));
    const auto masked = detection_metrics(counts_of(apply_brain_mask(pred, brain), ref));
    CHECK(masked.precision > raw.precision);
    CHECK(masked.sensitivity == raw.sensitivity);
  }

  TEST_CASE("unpaired t-test") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const auto same = unpaired_t_test(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == doctest::Approx(1.0).epsilon(1e-9));
    double last = 2.0;
    for (double delta : {0.5, 1.0, 2.0, 4.0}) {
      std::vector<double> b;
      for (double x : a) b.push_back(x + delta);
      const auto r = unpaired_t_test(a, b);
      CHECK(r.p < last);
      CHECK(r.p == doctest::Approx(oracle::t_two_sided_p(r.t, r.df)).epsilon(1e-7));
      last = r.p;
    }
    const auto sig = unpaired_t_test({0.839, 0.841, 0.837, 0.840, 0.838}, {0.570, 0.572, 0.569, 0.571, 0.568});
    CHECK(sig.p < 1e-4);
    const auto flat = unpaired_t_test({2, 2, 2}, {2, 2});
    CHECK(flat.p == 1.0);
    CHECK(unpaired_t_test({1, 1}, {2, 2}).p == 0.0);
    CHECK_THROWS_AS(unpaired_t_test({1}, {1, 2}), Error);
  }
}
