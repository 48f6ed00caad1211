#include "mclab/fedtrain.hpp"

#include <algorithm>
#include <optional>
#include <thread>

#include "mclab/dataset_io.hpp"
#include "mclab/error.hpp"
#include "mclab/sampler.hpp"

namespace mclab {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t x) {
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

// Stream for one hop; independent of strategy so TL and LWF(0) draw the same segments.
std::mt19937_64 hop_stream(std::uint64_t seed, const std::string& center, int hop) {
  return std::mt19937_64(mix(mix(seed) ^ fnv1a(center)) + static_cast<std::uint64_t>(hop) * 0x632be59bd9b4e019ULL);
}

double mean_val_dice(const NetworkDescriptor& desc, const ParamSet& params, const std::vector<const CaseRecord*>& val,
                     double threshold) {
  double sum = 0.0;
  for (const auto* c : val) sum += volumetric_dice(sliding_window_infer(desc, params, c->image, threshold).mask, c->label);
  return sum / static_cast<double>(val.size());
}

void check_architecture(const ParamSet& params, const NetworkDescriptor& desc) {
  const ParamSet ref = init_params(desc, 0);
  bool ok = params.names == ref.names && params.tensors.size() == ref.tensors.size();
  for (std::size_t i = 0; ok && i < ref.tensors.size(); ++i) ok = params.tensors[i]->shape == ref.tensors[i]->shape;
  if (!ok) throw Error(ErrorCode::ArchitectureMismatch, "parameters do not match the network descriptor");
}

struct LoopInput {
  const Checkpoint* init;
  const Checkpoint* teacher;
  SegmentSampler sampler;
  std::vector<const CaseRecord*> val;
  std::string center;
  std::string tag;
  int hop;
};

TrainResult run_loop(const LoopInput& in, const TrainConfig& cfg) {
  const NetworkDescriptor& desc = cfg.network;
  ParamSet params = in.init ? in.init->params.clone(true) : init_params(desc, cfg.seed);
  if (in.init) check_architecture(params, desc);
  std::optional<ParamSet> teacher;
  if (in.teacher) {
    teacher = in.teacher->params.clone(false);
    check_architecture(*teacher, desc);
  }
  OptimizerState opt = make_optimizer(params, cfg.lr, cfg.weight_decay);
  auto rng = hop_stream(cfg.seed, in.center, in.hop);

  const LwfOptions lwf{teacher ? cfg.lambda_lwf : 0.0, cfg.alpha_ss, cfg.kd_temperature};
  const int s = desc.input_size;
  const double inv_batch = 1.0 / cfg.batch_size;

  TrainResult result;
  double best = -1.0;
  ParamSet best_params = params.clone(false);
  for (int epoch = 1; epoch <= cfg.epochs_per_center; ++epoch) {
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      SegmentBatch batch = in.sampler.sample(cfg.batch_size, cfg.p_tumor, rng);
      params.zero_grad();
      for (auto& seg : batch.segments) {
        auto patch = ag::constant({1, s, s, s}, std::move(seg.patch));
        ag::backward(lwf_loss(desc, params, teacher ? &*teacher : nullptr, patch, seg.target, lwf));
      }
      for (auto& t : params.tensors)
        for (double& g : t->grad) g *= inv_batch;
      adam_step(params, opt);
    }
    const bool validate_now = epoch % cfg.validate_every_epochs == 0 || epoch == cfg.epochs_per_center;
    if (!validate_now) continue;
    const double dice = in.val.empty() ? 0.0 : mean_val_dice(desc, params, in.val, cfg.threshold);
    result.validation.push_back({in.center, in.hop, epoch, dice});
    // Without validation cases the last epoch is kept.
    if (dice > best || in.val.empty()) {
      best = dice;
      best_params = params.clone(false);
      result.best_epoch = epoch;
    }
  }

  best_params.round_to_f32();
  result.checkpoint.params = best_params.clone(true);
  if (in.init) result.checkpoint.provenance = in.init->provenance;
  for (int e = 1; e <= result.best_epoch; ++e)
    result.checkpoint.provenance.push_back({in.center, in.tag, cfg.seed, static_cast<std::uint32_t>(e)});
  result.checkpoint.best_val_dice = std::clamp(best, 0.0, 1.0);
  return result;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::single: return "single";
    case Strategy::mixed: return "mixed";
    case Strategy::tl: return "tl";
    case Strategy::lwf: return "lwf";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "single") return Strategy::single;
  if (s == "mixed") return Strategy::mixed;
  if (s == "tl") return Strategy::tl;
  if (s == "lwf") return Strategy::lwf;
  throw Error(ErrorCode::Config, "unknown strategy '" + s + "'");
}

std::string to_string(Topology t) { return t == Topology::swt ? "swt" : "cwt"; }

Topology topology_from_string(const std::string& s) {
  if (s == "swt") return Topology::swt;
  if (s == "cwt") return Topology::cwt;
  throw Error(ErrorCode::Config, "unknown topology '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::Config, why); };
  if (epochs_per_center < 1) fail("epochs_per_center must be >= 1");
  if (batches_per_epoch < 1) fail("batches_per_epoch must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (validate_every_epochs < 1) fail("validate_every_epochs must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(lambda_lwf >= 0.0)) fail("lambda_lwf must be >= 0");
  if (!(alpha_ss >= 0.0 && alpha_ss <= 1.0)) fail("alpha_ss must lie in [0, 1]");
  if (!(p_tumor >= 0.0 && p_tumor <= 1.0)) fail("p_tumor must lie in [0, 1]");
  if (!(kd_temperature > 0.0)) fail("kd_temperature must be > 0");
  if (cycles < 1) fail("cycles must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must lie in (0, 1)");
  network.validate();
}

std::string effective_strategy(const TrainConfig& cfg) {
  if (cfg.strategy == Strategy::lwf && cfg.lambda_lwf == 0.0) return "tl";
  return to_string(cfg.strategy);
}

TrainResult train_center(const Checkpoint* init, const CenterDataset& center, const TrainConfig& cfg,
                         const Checkpoint* teacher, int hop) {
  cfg.validate();
  if (cfg.strategy == Strategy::mixed) throw Error(ErrorCode::Config, "mixed training pools several centres");
  if (cfg.strategy == Strategy::lwf && teacher == nullptr) throw Error(ErrorCode::MissingTeacher, "lwf needs a teacher");
  if (cfg.strategy != Strategy::lwf && teacher != nullptr)
    throw Error(ErrorCode::Config, to_string(cfg.strategy) + " training takes no teacher");
  if (center.train.empty()) throw Error(ErrorCode::EmptyTrainSplit, "centre '" + center.profile.name + "' has no training cases");
  std::vector<const CaseRecord*> val;
  for (const auto& c : center.val) val.push_back(&c);
  const Checkpoint* start = init ? init : (cfg.strategy == Strategy::lwf ? teacher : nullptr);
  LoopInput in{start, teacher, SegmentSampler(center, cfg.network), std::move(val), center.profile.name,
               effective_strategy(cfg), hop};
  return run_loop(in, cfg);
}

TrainResult train_mixed(const std::vector<const CenterDataset*>& centers, const TrainConfig& cfg) {
  cfg.validate();
  if (centers.empty()) throw Error(ErrorCode::TooFewCenters, "mixed training needs at least one centre");
  std::string name;
  std::vector<const CaseRecord*> val;
  bool any_train = false;
  for (const auto* c : centers) {
    name += (name.empty() ? "" : "+") + c->profile.name;
    for (const auto& v : c->val) val.push_back(&v);
    any_train = any_train || !c->train.empty();
  }
  if (!any_train) throw Error(ErrorCode::EmptyTrainSplit, "no training cases in any centre");
  const std::string tag = centers.size() == 1 ? "single" : "mixed";
  LoopInput in{nullptr, nullptr, SegmentSampler(centers, cfg.network.input_size, cfg.network.output_size),
               std::move(val), name, tag, 0};
  return run_loop(in, cfg);
}

ProtocolResult run_protocol(const std::vector<fs::path>& manifests, const TrainConfig& cfg, const fs::path& work_dir,
                            const fs::path& initial_checkpoint) {
  cfg.validate();
  if (manifests.size() < 2) throw Error(ErrorCode::TooFewCenters, "weight transfer needs at least two centres");
  if (cfg.strategy == Strategy::mixed) throw Error(ErrorCode::Config, "mixed training is not a transfer protocol");
  const int passes = cfg.topology == Topology::swt ? 1 : cfg.cycles;

  ProtocolResult out;
  fs::path arriving = initial_checkpoint;
  int hop = 0;
  for (int pass = 0; pass < passes; ++pass) {
    for (const auto& manifest : manifests) {
      HopRecord rec;
      rec.hop = hop;
      rec.manifest = manifest.string();
      rec.checkpoint_in = arriving.string();
      // The hop sees a checkpoint path and its own manifest, nothing else.
      const CenterDataset local = load_center(manifest, {Split::train, Split::val}, &rec.accessed);
      rec.center = local.profile.name;
      std::optional<Checkpoint> incoming;
      if (!arriving.empty()) incoming = read_checkpoint(arriving, cfg.network);

      TrainConfig hop_cfg = cfg;
      const Checkpoint* teacher = nullptr;
      if (!incoming) {
        hop_cfg.strategy = Strategy::single;
      } else if (cfg.strategy == Strategy::lwf) {
        teacher = &*incoming;
      } else {
        hop_cfg.strategy = Strategy::tl;
      }
      TrainResult r = train_center(incoming ? &*incoming : nullptr, local, hop_cfg, teacher, hop);
      const fs::path next = work_dir / ("hop" + std::to_string(hop) + "_" + local.profile.name + ".mckp");
      write_checkpoint(r.checkpoint, cfg.network, next);
      rec.checkpoint_out = next.string();
      out.validation.insert(out.validation.end(), r.validation.begin(), r.validation.end());
      out.hops.push_back(std::move(rec));
      out.checkpoint = std::move(r.checkpoint);
      arriving = next;
      ++hop;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct CaseEval {
  DetectionCounts counts[2];
  std::vector<LesionContour> contours[2];
  int out_of_brain[2] = {0, 0};
};

CaseEval evaluate_case(const NetworkDescriptor& desc, const ParamSet& params, const CaseRecord& c,
                       const EvalOptions& opts) {
  const Volume pred = opts.oracle ? c.label : sliding_window_infer(desc, params, c.image, opts.threshold, opts.stride).mask;
  const ComponentMap ref = connected_components(c.label);
  CaseEval out;
  for (int masked = 0; masked < 2; ++masked) {
    if (masked ? !opts.with_mask : !opts.without_mask) continue;
    const Volume p = masked ? apply_brain_mask(pred, c.brain_mask) : pred;
    const ComponentMap pm = connected_components(p);
    for (const auto& voxels : pm.voxel_lists) {
      const auto brain = c.brain_mask.mask_values();
      if (std::none_of(voxels.begin(), voxels.end(), [&](std::size_t i) { return brain[i] != 0; })) ++out.out_of_brain[masked];
    }
    out.counts[masked] = match_lesions(pm, ref);
    out.contours[masked] = contour_metrics(pm, ref, out.counts[masked], opts.tolerance_mm).per_lesion;
  }
  return out;
}

MetricsRow make_row(const std::string& name, bool masked, const DetectionCounts& counts,
                    std::vector<LesionContour> contours, int out_of_brain) {
  MetricsRow row;
  row.center = name;
  row.with_brain_mask = masked;
  row.detection = detection_metrics(counts);
  row.contour = aggregate_contours(std::move(contours));
  row.n_volumes = counts.n_volumes;
  row.n_ref_lesions = counts.n_ref();
  row.n_pred_lesions = counts.n_pred();
  row.out_of_brain_components = out_of_brain;
  return row;
}

}  // namespace

MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const NetworkDescriptor& desc,
                                  const std::vector<EvalCenter>& centers, const EvalOptions& opts) {
  check_architecture(ckpt.params, desc);
  std::vector<const CaseRecord*> all;
  for (const auto& c : centers) {
    if (!c.cases || c.cases->empty()) throw Error(ErrorCode::NoVolumes, "centre '" + c.name + "' has no test volumes");
    for (const auto& r : *c.cases) all.push_back(&r);
  }
  const ParamSet frozen = ckpt.params.clone(false);
  std::vector<CaseEval> evals(all.size());
  const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(all.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < all.size(); ++i) evals[i] = evaluate_case(desc, frozen, *all[i], opts);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < all.size(); i += threads) evals[i] = evaluate_case(desc, frozen, *all[i], opts);
      });
    for (auto& th : pool) th.join();
  }

  MetricsReport report;
  for (int masked = 1; masked >= 0; --masked) {
    if (masked ? !opts.with_mask : !opts.without_mask) continue;
    DetectionCounts total;
    std::vector<LesionContour> total_contours;
    int total_oob = 0;
    std::size_t k = 0;
    for (const auto& c : centers) {
      DetectionCounts counts;
      std::vector<LesionContour> contours;
      int oob = 0;
      for (std::size_t i = 0; i < c.cases->size(); ++i, ++k) {
        counts += evals[k].counts[masked];
        contours.insert(contours.end(), evals[k].contours[masked].begin(), evals[k].contours[masked].end());
        oob += evals[k].out_of_brain[masked];
      }
      total += counts;
      total_contours.insert(total_contours.end(), contours.begin(), contours.end());
      total_oob += oob;
      report.rows.push_back(make_row(c.name, masked, counts, std::move(contours), oob));
    }
    if (centers.size() > 1) report.rows.push_back(make_row("combined", masked, total, std::move(total_contours), total_oob));
  }
  return report;
}

const MetricsRow& find_row(const MetricsReport& report, const std::string& center, bool with_brain_mask) {
  for (const auto& r : report.rows)
    if (r.center == center && r.with_brain_mask == with_brain_mask) return r;
  throw Error(ErrorCode::Config, "no metrics row for '" + center + "'");
}

}  // namespace mclab
