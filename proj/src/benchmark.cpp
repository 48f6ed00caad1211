#include "mclab/benchmark.hpp"

#include "mclab/binio.hpp"
#include "mclab/error.hpp"

namespace mclab {

namespace fs = std::filesystem;

const BilateralModel& BilateralResult::model(const std::string& name) const {
  for (const auto& m : models)
    if (m.name == name) return m;
  throw Error(ErrorCode::Config, "no model '" + name + "' in bilateral result");
}

BilateralResult run_bilateral(const CenterDataset& source, const CenterDataset& target, const TrainConfig& cfg,
                              const EvalOptions& eval, const fs::path& work_dir, const Logger& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const NetworkDescriptor& desc = cfg.network;
  const std::vector<EvalCenter> centers{{source.profile.name, &source.test}, {target.profile.name, &target.test}};
  BilateralResult out;
  out.seed = cfg.seed;

  auto finish = [&](const std::string& name, TrainResult r) {
    const fs::path path = work_dir / (name + ".mckp");
    write_checkpoint(r.checkpoint, desc, path);
    std::string curve;
    for (const auto& v : r.validation) curve += " " + std::to_string(v.dice).substr(0, 5);
    say(name + ": best epoch " + std::to_string(r.best_epoch) + ", validation Dice" + curve);
    BilateralModel m{name, binio::read_file(path), evaluate_checkpoint(r.checkpoint, desc, centers, eval), r.best_epoch};
    out.models.push_back(std::move(m));
  };

  TrainConfig c = cfg;
  c.strategy = Strategy::single;
  finish("source", train_center(nullptr, source, c, nullptr, 0));

  const Checkpoint arriving = read_checkpoint(work_dir / "source.mckp", desc);
  c.strategy = Strategy::tl;
  finish("tl", train_center(&arriving, target, c, nullptr, 1));
  c.strategy = Strategy::lwf;
  finish("lwf", train_center(&arriving, target, c, &arriving, 1));
  c.strategy = Strategy::single;
  finish("target", train_center(nullptr, target, c, nullptr, 0));
  return out;
}

std::vector<ScenarioResult> run_benchmark(const BenchmarkConfig& cfg, const fs::path& preset_dir, const fs::path& out_dir,
                                          const Logger& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  std::vector<ScenarioResult> results;
  for (const auto& sc : cfg.scenarios) {
    const CenterProfile sp = load_profile(preset_dir / sc.source_profile);
    const CenterProfile tp = load_profile(preset_dir / sc.target_profile);
    say("scenario " + sc.name + ": generating " + sp.name + " and " + tp.name);
    const CenterDataset source = generate_center(sp);
    const CenterDataset target = generate_center(tp);
    save_center(source, out_dir / "data" / sp.name);
    save_center(target, out_dir / "data" / tp.name);

    ScenarioResult res{sc.name, sp.name, tp.name, {}};
    std::vector<std::vector<MetricsRecord>> per_model(kBilateralModels.size());
    for (int k = 0; k < cfg.repeats; ++k) {
      TrainConfig tc = cfg.train;
      tc.seed = cfg.train.seed + static_cast<std::uint64_t>(k);
      say("scenario " + sc.name + ": seed " + std::to_string(tc.seed));
      const fs::path work = out_dir / sc.name / ("seed_" + std::to_string(tc.seed));
      BilateralResult r = run_bilateral(source, target, tc, cfg.eval, work, log);
      for (std::size_t m = 0; m < kBilateralModels.size(); ++m)
        for (const auto& row : r.models[m].report.rows) per_model[m].push_back({kBilateralModels[m], k, "test", row});
      res.repeats.push_back(std::move(r));
    }

    std::vector<MetricsRecord> all;
    for (std::size_t m = 0; m < kBilateralModels.size(); ++m) {
      const fs::path dir = out_dir / sc.name / kBilateralModels[m];
      binio::write_text_atomic(dir / "metrics.json",
                               metrics_document(sc.name + "/" + kBilateralModels[m], kBilateralModels[m], per_model[m]).dump(2) + "\n");
      all.insert(all.end(), per_model[m].begin(), per_model[m].end());
    }
    binio::write_text_atomic(out_dir / sc.name / "summary.txt", format_records(all));
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace mclab
