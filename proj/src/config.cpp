#include "mclab/config.hpp"

#include <cstdlib>
#include <set>

#include "mclab/binio.hpp"
#include "mclab/error.hpp"

namespace mclab {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::Config, "field '" + field + "': " + why);
}

void check_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) bad(where.empty() ? k : where + "." + k, "unknown field");
}

int get_int(const Json& j, const std::string& key) {
  if (!j.at(key).is_number_integer()) bad(key, "expected an integer");
  return j.at(key).get<int>();
}

double get_num(const Json& j, const std::string& key) {
  if (!j.at(key).is_number()) bad(key, "expected a number");
  return j.at(key).get<double>();
}

std::string get_str(const Json& j, const std::string& key) {
  if (!j.at(key).is_string()) bad(key, "expected a string");
  return j.at(key).get<std::string>();
}

std::uint64_t get_u64(const Json& j, const std::string& key) {
  if (!j.at(key).is_number_unsigned()) bad(key, "expected a non-negative integer");
  return j.at(key).get<std::uint64_t>();
}

std::vector<int> get_ints(const Json& j, const std::string& key) {
  const Json& v = j.at(key);
  if (!v.is_array()) bad(key, "expected an array of integers");
  std::vector<int> out;
  for (const auto& x : v) {
    if (!x.is_number_integer()) bad(key, "expected an array of integers");
    out.push_back(x.get<int>());
  }
  return out;
}

const std::set<std::string> kTrainKeys{"epochs_per_center", "batches_per_epoch", "batch_size", "validate_every_epochs",
                                       "lr",                "weight_decay",      "lambda_lwf", "alpha_ss",
                                       "p_tumor",           "kd_temperature",    "seed",       "strategy",
                                       "topology",          "cycles",            "threshold",  "network"};

EvalOptions eval_from_json(const Json& j) {
  check_keys(j, {"tolerance_mm", "threshold", "stride", "threads"}, "eval");
  EvalOptions e;
  if (j.contains("tolerance_mm")) e.tolerance_mm = get_num(j, "tolerance_mm");
  if (j.contains("threshold")) e.threshold = get_num(j, "threshold");
  if (j.contains("stride")) e.stride = get_int(j, "stride");
  if (j.contains("threads")) e.threads = get_int(j, "threads");
  if (!(e.tolerance_mm >= 0.0)) bad("eval.tolerance_mm", "must be >= 0");
  return e;
}

}  // namespace

Json network_to_json(const NetworkDescriptor& d) {
  Json j;
  j["input_size"] = d.input_size;
  j["output_size"] = d.output_size;
  j["kernel"] = d.kernel;
  j["normal_widths"] = d.normal_widths;
  j["context_factor"] = d.context_factor;
  j["context_widths"] = d.context_widths;
  j["fusion_width"] = d.fusion_width;
  return j;
}

NetworkDescriptor network_from_json(const Json& j) {
  check_keys(j, {"input_size", "output_size", "kernel", "normal_widths", "context_factor", "context_widths", "fusion_width"},
             "network");
  NetworkDescriptor d;
  if (j.contains("input_size")) d.input_size = get_int(j, "input_size");
  if (j.contains("output_size")) d.output_size = get_int(j, "output_size");
  if (j.contains("kernel")) d.kernel = get_int(j, "kernel");
  if (j.contains("normal_widths")) d.normal_widths = get_ints(j, "normal_widths");
  if (j.contains("context_factor")) d.context_factor = get_int(j, "context_factor");
  if (j.contains("context_widths")) d.context_widths = get_ints(j, "context_widths");
  if (j.contains("fusion_width")) d.fusion_width = get_int(j, "fusion_width");
  try {
    d.validate();
  } catch (const Error& e) {
    bad("network", e.what());
  }
  return d;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["epochs_per_center"] = c.epochs_per_center;
  j["batches_per_epoch"] = c.batches_per_epoch;
  j["batch_size"] = c.batch_size;
  j["validate_every_epochs"] = c.validate_every_epochs;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["lambda_lwf"] = c.lambda_lwf;
  j["alpha_ss"] = c.alpha_ss;
  j["p_tumor"] = c.p_tumor;
  j["kd_temperature"] = c.kd_temperature;
  j["seed"] = c.seed;
  j["strategy"] = to_string(c.strategy);
  j["topology"] = to_string(c.topology);
  j["cycles"] = c.cycles;
  j["threshold"] = c.threshold;
  j["network"] = network_to_json(c.network);
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  if (!j.is_object()) bad("train", "expected an object");
  if (j.contains("epochs_per_center")) c.epochs_per_center = get_int(j, "epochs_per_center");
  if (j.contains("batches_per_epoch")) c.batches_per_epoch = get_int(j, "batches_per_epoch");
  if (j.contains("batch_size")) c.batch_size = get_int(j, "batch_size");
  if (j.contains("validate_every_epochs")) c.validate_every_epochs = get_int(j, "validate_every_epochs");
  if (j.contains("lr")) c.lr = get_num(j, "lr");
  if (j.contains("weight_decay")) c.weight_decay = get_num(j, "weight_decay");
  if (j.contains("lambda_lwf")) c.lambda_lwf = get_num(j, "lambda_lwf");
  if (j.contains("alpha_ss")) c.alpha_ss = get_num(j, "alpha_ss");
  if (j.contains("p_tumor")) c.p_tumor = get_num(j, "p_tumor");
  if (j.contains("kd_temperature")) c.kd_temperature = get_num(j, "kd_temperature");
  if (j.contains("seed")) c.seed = get_u64(j, "seed");
  if (j.contains("cycles")) c.cycles = get_int(j, "cycles");
  if (j.contains("threshold")) c.threshold = get_num(j, "threshold");
  try {
    if (j.contains("strategy")) c.strategy = strategy_from_string(get_str(j, "strategy"));
  } catch (const Error&) {
    bad("strategy", "expected single, mixed, tl or lwf");
  }
  try {
    if (j.contains("topology")) c.topology = topology_from_string(get_str(j, "topology"));
  } catch (const Error&) {
    bad("topology", "expected swt or cwt");
  }
  if (j.contains("network")) c.network = network_from_json(j.at("network"));
  c.validate();
  return c;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  std::set<std::string> known = kTrainKeys;
  known.insert({"centers", "output_dir", "teacher_path", "init_path", "repeats"});
  check_keys(j, known, "");
  ExperimentConfig e;
  e.train = train_config_from_json(j);
  if (!j.contains("centers")) bad("centers", "missing");
  if (!j.at("centers").is_array() || j.at("centers").empty()) bad("centers", "expected a non-empty array of manifest paths");
  for (const auto& c : j.at("centers")) {
    if (!c.is_string()) bad("centers", "expected manifest paths");
    e.centers.push_back(c.get<std::string>());
  }
  if (!j.contains("output_dir")) bad("output_dir", "missing");
  e.output_dir = get_str(j, "output_dir");
  if (j.contains("teacher_path")) e.teacher_path = get_str(j, "teacher_path");
  if (j.contains("init_path")) e.init_path = get_str(j, "init_path");
  if (j.contains("repeats")) e.repeats = get_int(j, "repeats");
  if (e.repeats < 1) bad("repeats", "must be >= 1");
  return e;
}

Json experiment_config_to_json(const ExperimentConfig& e) {
  Json j = train_config_to_json(e.train);
  j["centers"] = e.centers;
  j["output_dir"] = e.output_dir;
  j["teacher_path"] = e.teacher_path;
  j["init_path"] = e.init_path;
  j["repeats"] = e.repeats;
  return j;
}

BenchmarkConfig benchmark_config_from_json(const Json& j) {
  check_keys(j, {"scenarios", "train", "repeats", "eval"}, "");
  BenchmarkConfig b;
  if (!j.contains("scenarios") || !j.at("scenarios").is_array() || j.at("scenarios").empty())
    bad("scenarios", "expected a non-empty array");
  for (const auto& s : j.at("scenarios")) {
    check_keys(s, {"name", "source", "target"}, "scenarios[]");
    b.scenarios.push_back({get_str(s, "name"), get_str(s, "source"), get_str(s, "target")});
  }
  if (j.contains("train")) {
    check_keys(j.at("train"), kTrainKeys, "train");
    b.train = train_config_from_json(j.at("train"));
  }
  if (j.contains("repeats")) b.repeats = get_int(j, "repeats");
  if (b.repeats < 1) bad("repeats", "must be >= 1");
  if (j.contains("eval")) b.eval = eval_from_json(j.at("eval"));
  return b;
}

Json load_json(const std::filesystem::path& path, ErrorCode on_error) {
  const auto bytes = binio::read_file(path);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw Error(on_error, path.string() + ": malformed JSON: " + e.what());
  }
}

BenchmarkConfig load_benchmark_config(const std::filesystem::path& path) {
  return benchmark_config_from_json(load_json(path, ErrorCode::Config));
}

std::optional<std::uint64_t> seed_from_env() {
  const char* s = std::getenv("MCLAB_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0' || s[0] == '-') throw Error(ErrorCode::Config, "MCLAB_SEED must be a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

}  // namespace mclab
