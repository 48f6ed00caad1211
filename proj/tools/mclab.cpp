#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mclab/benchmark.hpp"
#include "mclab/binio.hpp"
#include "mclab/config.hpp"
#include "mclab/dataset_io.hpp"
#include "mclab/error.hpp"
#include "mclab/fedtrain.hpp"
#include "mclab/report.hpp"

#ifndef MCLAB_VERSION
#define MCLAB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace mclab;

namespace {

enum Exit : int {
  kOk = 0,
  kConfig = 2,
  kIo = 3,
  kTraining = 4,
  kArchitecture = 5,
  kIncompatible = 6,
};

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::Config:
    case ErrorCode::ProfileInvalid:
    case ErrorCode::MissingTeacher:
    case ErrorCode::InvalidThickness:
    case ErrorCode::InvalidSpacing:
      return kConfig;
    case ErrorCode::Io:
    case ErrorCode::BadMagic:
    case ErrorCode::VersionMismatch:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::InvalidDtype:
    case ErrorCode::DimsMismatch:
      return kIo;
    case ErrorCode::ArchitectureMismatch:
      return kArchitecture;
    case ErrorCode::IncompatibleRuns:
      return kIncompatible;
    default:
      return kTraining;
  }
}

struct Globals {
  std::string workdir = ".";
  int threads = 0;
  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : fs::path(workdir) / path;
  }
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::ostringstream s;
  s << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// Deterministic log file plus a sidecar carrying wall-clock stamps.
class RunLog {
 public:
  RunLog(const fs::path& dir, bool echo) : echo_(echo) {
    fs::create_directories(dir);
    log_.open(dir / "train.log", std::ios::trunc);
    stamps_.open(dir / "train.log.times", std::ios::trunc);
    if (!log_ || !stamps_) throw Error(ErrorCode::Io, "cannot open log files in " + dir.string());
  }
  void operator()(const std::string& line) {
    log_ << line << "\n";
    log_.flush();
    stamps_ << timestamp() << " " << line << "\n";
    stamps_.flush();
    if (echo_) std::cerr << line << "\n";
  }

 private:
  std::ofstream log_, stamps_;
  bool echo_;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void log_validation(RunLog& log, const std::vector<ValidationPoint>& points) {
  for (const auto& p : points)
    log("validation center=" + p.center + " hop=" + std::to_string(p.hop) + " epoch=" + std::to_string(p.epoch) +
        " dice=" + fmt(p.dice, 6));
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const Globals& g, const std::string& profile_file, const std::string& out_dir) {
  const CenterProfile p = load_profile(g.resolve(profile_file));
  const CenterDataset ds = generate_center(p);
  const fs::path manifest = save_center(ds, g.resolve(out_dir));
  std::cout << "wrote " << manifest.string() << " (" << ds.train.size() << " train, " << ds.val.size() << " val, "
            << ds.test.size() << " test)\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainPlan {
  ExperimentConfig cfg;
  std::vector<fs::path> manifests;
  std::vector<std::string> center_names;
  fs::path output;
  fs::path teacher;
  fs::path init;
  std::string mode;  // single, mixed, transfer, protocol
};

TrainPlan plan_training(const Globals& g, const std::string& config_file) {
  TrainPlan plan;
  plan.cfg = experiment_config_from_json(load_json(g.resolve(config_file), ErrorCode::Config));
  if (const auto s = seed_from_env()) plan.cfg.train.seed = *s;
  for (const auto& c : plan.cfg.centers) {
    plan.manifests.push_back(g.resolve(c));
    plan.center_names.push_back(read_manifest(plan.manifests.back()).name);
  }
  plan.output = g.resolve(plan.cfg.output_dir);
  if (!plan.cfg.teacher_path.empty()) plan.teacher = g.resolve(plan.cfg.teacher_path);
  if (!plan.cfg.init_path.empty()) plan.init = g.resolve(plan.cfg.init_path);

  const Strategy s = plan.cfg.train.strategy;
  const std::size_t n = plan.manifests.size();
  if (s == Strategy::mixed) {
    plan.mode = "mixed";
  } else if (n >= 2) {
    if (s == Strategy::single)
      throw Error(ErrorCode::Config, "field 'strategy': single trains one centre; use tl or lwf to transfer or mixed to pool");
    plan.mode = "protocol";
  } else if (s == Strategy::single) {
    plan.mode = "single";
  } else {
    plan.mode = "transfer";
    if (s == Strategy::lwf && plan.teacher.empty())
      throw Error(ErrorCode::MissingTeacher, "lwf on a single centre needs teacher_path");
    if (s == Strategy::tl && plan.teacher.empty() && plan.init.empty())
      throw Error(ErrorCode::Config, "field 'init_path': tl on a single centre needs an arriving checkpoint");
  }
  return plan;
}

Json plan_json(const TrainPlan& plan, const std::string& config_file) {
  Json j;
  j["tool"] = "mclab";
  j["version"] = MCLAB_VERSION;
  j["config_path"] = config_file;
  j["mode"] = plan.mode;
  j["config"] = experiment_config_to_json(plan.cfg);
  Json centers = Json::array();
  for (std::size_t i = 0; i < plan.manifests.size(); ++i)
    centers.push_back(Json{{"name", plan.center_names[i]}, {"manifest", plan.manifests[i].string()}});
  j["centers"] = std::move(centers);
  j["output_dir"] = plan.output.string();
  Json seeds = Json::array();
  for (int k = 0; k < plan.cfg.repeats; ++k) seeds.push_back(plan.cfg.train.seed + static_cast<std::uint64_t>(k));
  j["seeds"] = std::move(seeds);
  j["teacher_path"] = plan.teacher.string();
  j["init_path"] = plan.init.string();
  return j;
}

fs::path repeat_dir(const TrainPlan& plan, std::uint64_t seed) {
  return plan.cfg.repeats == 1 ? plan.output : plan.output / ("seed_" + std::to_string(seed));
}

int cmd_train(const Globals& g, const std::string& config_file, bool dry_run) {
  const TrainPlan plan = plan_training(g, config_file);
  const Json pj = plan_json(plan, config_file);
  if (dry_run) {
    std::cout << pj.dump(2) << "\n";
    return kOk;
  }
  fs::create_directories(plan.output);
  binio::write_text_atomic(plan.output / "experiment.json", pj.dump(2) + "\n");
  RunLog log(plan.output, true);
  const NetworkDescriptor& desc = plan.cfg.train.network;
  log("mclab " + std::string(MCLAB_VERSION) + " train mode=" + plan.mode +
      " strategy=" + effective_strategy(plan.cfg.train));

  std::optional<Checkpoint> teacher, init;
  if (!plan.teacher.empty()) teacher = read_checkpoint(plan.teacher, desc);
  if (!plan.init.empty()) init = read_checkpoint(plan.init, desc);

  for (int k = 0; k < plan.cfg.repeats; ++k) {
    TrainConfig cfg = plan.cfg.train;
    cfg.seed = plan.cfg.train.seed + static_cast<std::uint64_t>(k);
    const fs::path dir = repeat_dir(plan, cfg.seed);
    fs::create_directories(dir);
    log("repeat " + std::to_string(k) + " seed " + std::to_string(cfg.seed));

    if (plan.mode == "protocol") {
      const fs::path arriving = !plan.teacher.empty() ? plan.teacher : plan.init;
      const ProtocolResult r = run_protocol(plan.manifests, cfg, dir, arriving);
      log_validation(log, r.validation);
      for (const auto& h : r.hops) {
        log("hop " + std::to_string(h.hop) + " center=" + h.center + " in=" +
            (h.checkpoint_in.empty() ? "-" : fs::path(h.checkpoint_in).filename().string()) +
            " out=" + fs::path(h.checkpoint_out).filename().string());
        for (const auto& a : h.accessed) log("  accessed " + fs::relative(a, g.workdir).string());
      }
      write_checkpoint(r.checkpoint, desc, dir / "final.mckp");
      log("wrote " + (dir / "final.mckp").string() + " best_val_dice=" + fmt(r.checkpoint.best_val_dice, 6));
      continue;
    }

    TrainResult r;
    std::string name;
    if (plan.mode == "mixed") {
      std::vector<CenterDataset> data;
      for (const auto& m : plan.manifests) data.push_back(load_center(m, {Split::train, Split::val}));
      std::vector<const CenterDataset*> ptrs;
      for (const auto& d : data) ptrs.push_back(&d);
      r = train_mixed(ptrs, cfg);
      name = "mixed";
    } else {
      const CenterDataset local = load_center(plan.manifests.front(), {Split::train, Split::val});
      const Checkpoint* start = init ? &*init : (teacher ? &*teacher : nullptr);
      if (plan.mode == "single") {
        r = train_center(init ? &*init : nullptr, local, cfg, nullptr, 0);
      } else {
        r = train_center(start, local, cfg, cfg.strategy == Strategy::lwf ? &*teacher : nullptr, 1);
      }
      name = effective_strategy(cfg) + "_" + local.profile.name;
    }
    log_validation(log, r.validation);
    const fs::path out = dir / (name + ".mckp");
    write_checkpoint(r.checkpoint, desc, out);
    log("wrote " + out.string() + " best_epoch=" + std::to_string(r.best_epoch) +
        " best_val_dice=" + fmt(r.checkpoint.best_val_dice, 6) +
        " provenance=" + std::to_string(r.checkpoint.provenance.size()));
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> manifests;
  std::string out_dir;
  std::string config;
  std::string run;
  bool oracle = false;
  bool no_brain_mask = false;
  double tolerance = 1.0;
  double threshold = 0.5;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  if (a.checkpoints.empty() && !a.oracle) throw Error(ErrorCode::Config, "eval needs --checkpoint or --oracle");
  NetworkDescriptor desc;
  if (!a.config.empty()) {
    const Json j = load_json(g.resolve(a.config), ErrorCode::Config);
    if (j.contains("network")) desc = network_from_json(j.at("network"));
  }
  std::vector<CenterDataset> data;
  for (const auto& m : a.manifests) data.push_back(load_center(g.resolve(m), {Split::test}));
  std::vector<EvalCenter> centers;
  for (const auto& d : data) centers.push_back({d.profile.name, &d.test});

  EvalOptions opts;
  opts.tolerance_mm = a.tolerance;
  opts.threshold = a.threshold;
  opts.oracle = a.oracle;
  opts.with_mask = !a.no_brain_mask;
  opts.without_mask = true;
  opts.threads = g.threads > 0 ? g.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  std::vector<MetricsRecord> records;
  std::string strategy = a.oracle ? "oracle" : "";
  const std::vector<std::string> sources = a.oracle && a.checkpoints.empty() ? std::vector<std::string>{""} : a.checkpoints;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    Checkpoint ck;
    if (sources[k].empty()) {
      ck.params = init_params(desc, 0);
    } else {
      ck = read_checkpoint(g.resolve(sources[k]), desc);
      if (!a.oracle && !ck.provenance.empty()) {
        const std::string s = ck.provenance.back().strategy;
        if (!strategy.empty() && strategy != s) strategy = "mixed-runs";
        else strategy = s;
      }
    }
    const MetricsReport rep = evaluate_checkpoint(ck, desc, centers, opts);
    for (const auto& row : rep.rows) records.push_back({a.run, static_cast<int>(k), "test", row});
  }

  const std::string table = format_records(records);
  std::cout << table;
  if (!a.out_dir.empty()) {
    const fs::path out = g.resolve(a.out_dir);
    fs::create_directories(out);
    binio::write_text_atomic(out / "metrics.json", metrics_document(a.run, strategy, records).dump(2) + "\n");
    binio::write_text_atomic(out / "table.txt", table);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// report, benchmark

int cmd_report(const Globals& g, const std::vector<std::string>& dirs, const std::string& out_dir) {
  std::vector<RunMetrics> runs;
  for (const auto& d : dirs) runs.push_back(load_run_metrics(g.resolve(d)));
  const ComparisonReport rep = compare_runs(runs);
  std::cout << rep.markdown;
  if (!out_dir.empty()) {
    const fs::path out = g.resolve(out_dir);
    fs::create_directories(out);
    binio::write_text_atomic(out / "report.json", rep.json.dump(2) + "\n");
    binio::write_text_atomic(out / "report.md", rep.markdown);
  }
  return kOk;
}

int cmd_benchmark(const Globals& g, const std::string& preset, const std::string& out_dir, int repeats) {
  const fs::path preset_path = g.resolve(preset);
  BenchmarkConfig cfg = load_benchmark_config(preset_path);
  if (const auto s = seed_from_env()) cfg.train.seed = *s;
  if (repeats > 0) cfg.repeats = repeats;
  if (g.threads > 0) cfg.eval.threads = g.threads;
  const fs::path out = g.resolve(out_dir);
  fs::create_directories(out);
  RunLog log(out, true);
  const auto results = run_benchmark(cfg, preset_path.parent_path(), out, [&](const std::string& s) { log(s); });
  for (const auto& r : results) {
    std::cout << "== " << r.name << ": " << r.source << " -> " << r.target << " ==\n";
    const auto bytes = binio::read_file(out / r.name / "summary.txt");
    std::cout << std::string(bytes.begin(), bytes.end()) << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mclab: synthetic multicentre brain-metastasis segmentation with weight transfer and LWF"};
  app.set_version_flag("--version", MCLAB_VERSION);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--workdir", g.workdir, "Base directory for relative paths")->capture_default_str();
  app.add_option("--threads", g.threads, "Evaluation threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  std::string profile, out_dir;
  auto* synth = app.add_subcommand("synth", "Generate one synthetic centre from a profile");
  synth->add_option("profile", profile, "Profile JSON")->required();
  synth->add_option("out_dir", out_dir, "Output directory")->required();

  std::string config;
  bool dry_run = false;
  auto* train = app.add_subcommand("train", "Train according to an experiment config");
  train->add_option("config", config, "Experiment JSON")->required();
  train->add_flag("--dry-run", dry_run, "Validate and print the plan without writing anything");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the test split of centres");
  eval->add_option("manifests", ea.manifests, "Centre manifests")->required();
  eval->add_option("--checkpoint", ea.checkpoints, "Checkpoint file; repeat the flag for repeats");
  eval->add_flag("--oracle", ea.oracle, "Use the labels as predictions");
  eval->add_flag("--no-brain-mask", ea.no_brain_mask, "Report only rows without brain-mask filtering");
  eval->add_option("--out", ea.out_dir, "Run directory for metrics.json");
  eval->add_option("--config", ea.config, "JSON holding a 'network' descriptor");
  eval->add_option("--run", ea.run, "Run label")->default_val("run");
  eval->add_option("--tolerance", ea.tolerance, "Surface Dice tolerance in mm")->default_val(1.0);
  eval->add_option("--threshold", ea.threshold, "Probability threshold")->default_val(0.5);

  std::vector<std::string> run_dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Compare run directories");
  report->add_option("runs", run_dirs, "Run directories holding metrics.json")->required();
  report->add_option("--out", report_out, "Directory for report.json and report.md");

  std::string preset, bench_out;
  int bench_repeats = 0;
  auto* bench = app.add_subcommand("benchmark", "Run the bilateral transfer benchmark from a preset");
  bench->add_option("preset", preset, "Benchmark JSON")->required();
  bench->add_option("--out", bench_out, "Output directory")->default_val("benchmark_out");
  bench->add_option("--repeats", bench_repeats, "Override the preset's repeat count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (*synth) return cmd_synth(g, profile, out_dir);
    if (*train) return cmd_train(g, config, dry_run);
    if (*eval) return cmd_eval(g, ea);
    if (*report) return cmd_report(g, run_dirs, report_out);
    if (*bench) return cmd_benchmark(g, preset, bench_out, bench_repeats);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTraining;
  }
  return kOk;
}
