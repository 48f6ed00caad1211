#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mclab/binio.hpp"
#include "mclab/dataset_io.hpp"
#include "mclab/error.hpp"
#include "mclab/fedtrain.hpp"

using namespace mclab;
namespace fs = std::filesystem;

namespace {

CenterProfile tiny(const std::string& name, std::uint64_t seed, SpatialMode mode) {
  CenterProfile p;
  p.name = name;
  p.n_train = 3;
  p.n_val = 2;
  p.n_test = 2;
  p.dims = {16, 16, 14};
  p.seed = seed;
  p.spatial_mode = mode;
  p.lesion_density = 2.0;
  p.size_log_mean = std::log(0.03);
  p.size_log_std = 0.4;
  p.max_lesion_radius_mm = 3.0;
  p.meninges_thickness = 1;
  return p;
}

const CenterDataset& center_a() {
  static const CenterDataset ds = generate_center(tiny("ca", 1, SpatialMode::parenchymal));
  return ds;
}
const CenterDataset& center_b() {
  static const CenterDataset ds = generate_center(tiny("cb", 2, SpatialMode::boundary));
  return ds;
}

TrainConfig quick(Strategy s = Strategy::single) {
  TrainConfig c;
  c.epochs_per_center = 4;
  c.batches_per_epoch = 2;
  c.batch_size = 4;
  c.validate_every_epochs = 2;
  c.lr = 3e-3;
  c.seed = 5;
  c.strategy = s;
  c.network = NetworkDescriptor::compact();
  return c;
}

std::vector<std::uint8_t> bytes_of(const Checkpoint& c) { return encode_checkpoint(c, NetworkDescriptor::compact()); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "mclab_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<fs::path> saved_manifests() {
  static std::vector<fs::path> paths = [] {
    const fs::path root = scratch("fed_data");
    return std::vector<fs::path>{save_center(center_a(), root / "ca"), save_center(center_b(), root / "cb")};
  }();
  return paths;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an mclab::Error");
  return ErrorCode::Io;
}

double norm_diff(const ParamSet& a, const ParamSet& b) {
  const auto x = a.flatten(), y = b.flatten();
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("fedtrain") {
  TEST_CASE("config validation and names") {
    CHECK_NOTHROW(quick().validate());
    auto bad = quick();
    bad.validate_every_epochs = 0;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
    bad = quick();
    bad.epochs_per_center = 0;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
    bad = quick();
    bad.lambda_lwf = -0.1;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
    CHECK(strategy_from_string("lwf") == Strategy::lwf);
    CHECK(topology_from_string("cwt") == Topology::cwt);
    CHECK(code_of([] { strategy_from_string("ewc"); }) == ErrorCode::Config);
    auto zero = quick(Strategy::lwf);
    zero.lambda_lwf = 0;
    CHECK(effective_strategy(zero) == "tl");
    CHECK(effective_strategy(quick(Strategy::lwf)) == "lwf");
  }

  TEST_CASE("train_center: determinism, selection, provenance") {
    const auto cfg = quick();
    const TrainResult a = train_center(nullptr, center_a(), cfg, nullptr);
    const TrainResult b = train_center(nullptr, center_a(), cfg, nullptr);
    CHECK(bytes_of(a.checkpoint) == bytes_of(b.checkpoint));
    REQUIRE(a.validation.size() == 2);
    CHECK(a.validation[0].epoch == 2);
    CHECK(a.validation[1].epoch == 4);
    double best = -1;
    int best_epoch = 0;
    for (const auto& v : a.validation)
      if (v.dice > best) best = v.dice, best_epoch = v.epoch;
    CHECK(a.checkpoint.best_val_dice == best);
    CHECK(a.best_epoch == best_epoch);
    CHECK(a.checkpoint.best_val_dice >= 0.0);
    CHECK(a.checkpoint.best_val_dice <= 1.0);
    REQUIRE(!a.checkpoint.provenance.empty());
    for (const auto& p : a.checkpoint.provenance) {
      CHECK(p.center == "ca");
      CHECK(p.strategy == "single");
      CHECK(p.seed == 5);
    }
    // Params are stored at f32 precision.
    for (double v : a.checkpoint.params.flatten()) CHECK(v == static_cast<double>(static_cast<float>(v)));

    auto other = cfg;
    other.seed = 6;
    CHECK(bytes_of(train_center(nullptr, center_a(), other, nullptr).checkpoint) != bytes_of(a.checkpoint));
  }

  TEST_CASE("TL equals LWF with lambda 0, bit for bit") {
    const Checkpoint init = train_center(nullptr, center_a(), quick(), nullptr).checkpoint;
    const TrainResult tl = train_center(&init, center_b(), quick(Strategy::tl), nullptr, 1);
    auto cfg = quick(Strategy::lwf);
    cfg.lambda_lwf = 0.0;
    const TrainResult lwf0 = train_center(&init, center_b(), cfg, &init, 1);
    CHECK(bytes_of(tl.checkpoint) == bytes_of(lwf0.checkpoint));
    CHECK(tl.checkpoint.provenance.back().strategy == "tl");
    // Provenance extends the arriving history.
    CHECK(tl.checkpoint.provenance.front().center == "ca");
    CHECK(tl.checkpoint.provenance.back().center == "cb");
  }

  TEST_CASE("LWF: larger lambda keeps the student closer to the teacher; teacher untouched") {
    const Checkpoint teacher = train_center(nullptr, center_a(), quick(), nullptr).checkpoint;
    const auto teacher_bytes = bytes_of(teacher);
    std::vector<double> moves;
    for (double lambda : {0.1, 1.0, 10.0, 100.0}) {
      auto cfg = quick(Strategy::lwf);
      cfg.lambda_lwf = lambda;
      cfg.validate_every_epochs = cfg.epochs_per_center;  // select the final epoch
      const TrainResult r = train_center(&teacher, center_b(), cfg, &teacher, 1);
      moves.push_back(norm_diff(r.checkpoint.params, teacher.params));
    }
    CHECK(bytes_of(teacher) == teacher_bytes);
    for (std::size_t i = 1; i < moves.size(); ++i) CHECK(moves[i] < moves[i - 1]);
  }

  TEST_CASE("mixed training") {
    const auto cfg = quick();
    const TrainResult one = train_mixed({&center_a()}, cfg);
    const TrainResult single = train_center(nullptr, center_a(), cfg, nullptr);
    CHECK(bytes_of(one.checkpoint) == bytes_of(single.checkpoint));

    const TrainResult both = train_mixed({&center_a(), &center_b()}, cfg);
    CHECK(both.checkpoint.provenance.back().strategy == "mixed");
    CHECK(both.checkpoint.provenance.back().center == "ca+cb");
    CHECK(code_of([] { train_mixed({}, quick()); }) == ErrorCode::TooFewCenters);
    CenterDataset empty;
    empty.profile.name = "void";
    CHECK(code_of([&] { train_mixed({&empty}, quick()); }) == ErrorCode::EmptyTrainSplit);
  }

  TEST_CASE("train_center errors") {
    const Checkpoint init = train_center(nullptr, center_a(), quick(), nullptr).checkpoint;
    CHECK(code_of([] { train_center(nullptr, center_a(), quick(Strategy::lwf), nullptr); }) == ErrorCode::MissingTeacher);
    CHECK(code_of([&] { train_center(&init, center_a(), quick(Strategy::tl), &init); }) == ErrorCode::Config);
    CHECK(code_of([] { train_center(nullptr, center_a(), quick(Strategy::mixed), nullptr); }) == ErrorCode::Config);
    CenterDataset empty;
    empty.profile.name = "void";
    CHECK(code_of([&] { train_center(nullptr, empty, quick(), nullptr); }) == ErrorCode::EmptyTrainSplit);
    Checkpoint foreign = init;
    foreign.params = init_params(NetworkDescriptor{}, 0);
    CHECK(code_of([&] { train_center(&foreign, center_a(), quick(Strategy::tl), nullptr); }) == ErrorCode::ArchitectureMismatch);
  }

  TEST_CASE("protocol: SWT order, CWT with one cycle, privacy audit, hop files") {
    const auto manifests = saved_manifests();
    auto cfg = quick(Strategy::lwf);
    const fs::path swt_dir = scratch("swt");
    const ProtocolResult swt = run_protocol(manifests, cfg, swt_dir);
    REQUIRE(swt.hops.size() == 2);
    CHECK(swt.hops[0].center == "ca");
    CHECK(swt.hops[0].checkpoint_in.empty());
    CHECK(swt.hops[1].checkpoint_in == swt.hops[0].checkpoint_out);

    // Provenance: all of A's entries, then all of B's.
    const auto& prov = swt.checkpoint.provenance;
    const auto first_b = std::find_if(prov.begin(), prov.end(), [](const ProvenanceEntry& e) { return e.center == "cb"; });
    REQUIRE(first_b != prov.begin());
    REQUIRE(first_b != prov.end());
    CHECK(std::all_of(prov.begin(), first_b, [](const ProvenanceEntry& e) { return e.center == "ca" && e.strategy == "single"; }));
    CHECK(std::all_of(first_b, prov.end(), [](const ProvenanceEntry& e) { return e.center == "cb" && e.strategy == "lwf"; }));

    // Each hop opened only files under its own centre's directory.
    for (std::size_t h = 0; h < swt.hops.size(); ++h) {
      const std::string own = manifests[h].parent_path().string();
      REQUIRE(!swt.hops[h].accessed.empty());
      for (const auto& f : swt.hops[h].accessed) CHECK(f.rfind(own, 0) == 0);
    }

    // The hop-0 file equals an independent single-centre run: the LWF hop did not alter it.
    const auto hop0 = binio::read_file(swt.hops[0].checkpoint_out);
    auto single = cfg;
    single.strategy = Strategy::single;
    CHECK(hop0 == bytes_of(train_center(nullptr, center_a(), single, nullptr).checkpoint));

    cfg.topology = Topology::cwt;
    cfg.cycles = 1;
    const ProtocolResult cwt1 = run_protocol(manifests, cfg, scratch("cwt1"));
    CHECK(bytes_of(cwt1.checkpoint) == bytes_of(swt.checkpoint));

    cfg.cycles = 2;
    const ProtocolResult cwt2 = run_protocol(manifests, cfg, scratch("cwt2"));
    CHECK(cwt2.hops.size() == 4);
    CHECK(cwt2.hops[2].center == "ca");

    CHECK(code_of([&] { run_protocol({manifests[0]}, cfg, scratch("one")); }) == ErrorCode::TooFewCenters);
  }

  TEST_CASE("evaluation: oracle, determinism, brain mask, errors") {
    const auto desc = NetworkDescriptor::compact();
    const std::vector<EvalCenter> centers{{"ca", &center_a().test}, {"cb", &center_b().test}};
    const Checkpoint ck = train_center(nullptr, center_a(), quick(), nullptr).checkpoint;

    EvalOptions o;
    o.oracle = true;
    const MetricsReport perfect = evaluate_checkpoint(ck, desc, centers, o);
    REQUIRE(perfect.rows.size() == 6);
    CHECK(perfect.rows[0].with_brain_mask);
    CHECK(perfect.rows[2].center == "combined");
    CHECK(!perfect.rows[3].with_brain_mask);
    for (const auto& r : perfect.rows) {
      CHECK(r.detection.sensitivity == 1.0);
      CHECK(r.detection.precision == 1.0);
      CHECK(r.detection.fpr == 0.0);
      CHECK(*r.contour.sdice == 1.0);
      CHECK(*r.contour.hd95_mm == 0.0);
    }
    CHECK(find_row(perfect, "combined", true).n_volumes == 4);

    EvalOptions real;
    real.threads = 2;
    const MetricsReport a = evaluate_checkpoint(ck, desc, centers, real);
    real.threads = 1;
    const MetricsReport b = evaluate_checkpoint(ck, desc, centers, real);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].detection.f1 == b.rows[i].detection.f1);
      CHECK(a.rows[i].n_pred_lesions == b.rows[i].n_pred_lesions);
      CHECK(a.rows[i].contour.sdice == b.rows[i].contour.sdice);
    }
    for (const char* c : {"ca", "cb", "combined"}) {
      const auto& m = find_row(a, c, true);
      const auto& u = find_row(a, c, false);
      CHECK(m.detection.sensitivity == u.detection.sensitivity);
      CHECK(m.detection.precision >= u.detection.precision);
      CHECK(m.out_of_brain_components == 0);
    }

    EvalOptions one;
    one.without_mask = false;
    CHECK(evaluate_checkpoint(ck, desc, {{"ca", &center_a().test}}, one).rows.size() == 1);

    CHECK(code_of([&] { evaluate_checkpoint(ck, NetworkDescriptor{}, centers, real); }) == ErrorCode::ArchitectureMismatch);
    const std::vector<CaseRecord> none;
    CHECK(code_of([&] { evaluate_checkpoint(ck, desc, {{"x", &none}}, real); }) == ErrorCode::NoVolumes);
  }
}
