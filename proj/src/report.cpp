#include "mclab/report.hpp"

#include <algorithm>
#include <numeric>
#include <cstdio>
#include <set>
#include <sstream>

#include "mclab/binio.hpp"
#include "mclab/error.hpp"

namespace mclab {

namespace fs = std::filesystem;

namespace {

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_from(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string fmt(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int digits_for(const std::string& key) { return key == "hd95_mm" || key == "fpr" ? 2 : 3; }

std::string cell(const MetricsRow* row, const std::string& key) {
  if (!row) return "";
  const auto v = metric_value(*row, key);
  return v ? fmt(*v, digits_for(key)) : "-";
}

std::string pad(const std::string& s, std::size_t w, bool left) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

// Mean over repeats; optional metrics average over the repeats that define them.
MetricsRow average(const std::vector<const MetricsRow*>& rows) {
  MetricsRow out = *rows.front();
  const double n = static_cast<double>(rows.size());
  auto mean_of = [&](auto get) {
    double s = 0.0;
    for (const auto* r : rows) s += get(*r);
    return s / n;
  };
  out.detection.sensitivity = mean_of([](const MetricsRow& r) { return r.detection.sensitivity; });
  out.detection.precision = mean_of([](const MetricsRow& r) { return r.detection.precision; });
  out.detection.fpr = mean_of([](const MetricsRow& r) { return r.detection.fpr; });
  out.detection.f1 = mean_of([](const MetricsRow& r) { return r.detection.f1; });
  out.detection.f2 = mean_of([](const MetricsRow& r) { return r.detection.f2; });
  auto opt_mean = [&](std::optional<double> ContourMetrics::*field) -> std::optional<double> {
    double s = 0.0;
    int k = 0;
    for (const auto* r : rows)
      if (r->contour.*field) s += *(r->contour.*field), ++k;
    if (k == 0) return std::nullopt;
    return s / k;
  };
  out.contour.sdice = opt_mean(&ContourMetrics::sdice);
  out.contour.hd95_mm = opt_mean(&ContourMetrics::hd95_mm);
  out.contour.dice = opt_mean(&ContourMetrics::dice);
  return out;
}

}  // namespace

const std::vector<MetricColumn>& metric_columns() {
  static const std::vector<MetricColumn> cols{{"Sensitivity", "sensitivity"}, {"Precision", "precision"},
                                              {"FPR", "fpr"},                 {"F1", "f1"},
                                              {"F2", "f2"},                   {"sDice", "sdice"},
                                              {"HD95", "hd95_mm"}};
  return cols;
}

std::optional<double> metric_value(const MetricsRow& row, const std::string& key) {
  if (key == "sensitivity") return row.detection.sensitivity;
  if (key == "precision") return row.detection.precision;
  if (key == "fpr") return row.detection.fpr;
  if (key == "f1") return row.detection.f1;
  if (key == "f2") return row.detection.f2;
  if (key == "sdice") return row.contour.sdice;
  if (key == "hd95_mm") return row.contour.hd95_mm;
  if (key == "dice") return row.contour.dice;
  throw Error(ErrorCode::Config, "unknown metric '" + key + "'");
}

Json metrics_row_json(const MetricsRecord& rec) {
  const MetricsRow& r = rec.row;
  Json j;
  j["model"] = rec.model;
  j["repeat"] = rec.repeat;
  j["center"] = r.center;
  j["split"] = rec.split;
  j["sensitivity"] = r.detection.sensitivity;
  j["precision"] = r.detection.precision;
  j["fpr"] = r.detection.fpr;
  j["f1"] = r.detection.f1;
  j["f2"] = r.detection.f2;
  j["sdice"] = opt_json(r.contour.sdice);
  j["hd95_mm"] = opt_json(r.contour.hd95_mm);
  j["dice"] = opt_json(r.contour.dice);
  j["n_volumes"] = r.n_volumes;
  j["n_ref_lesions"] = r.n_ref_lesions;
  j["n_pred_lesions"] = r.n_pred_lesions;
  j["out_of_brain_components"] = r.out_of_brain_components;
  j["with_brain_mask"] = r.with_brain_mask;
  return j;
}

MetricsRecord metrics_row_from_json(const Json& j) {
  MetricsRecord rec;
  rec.model = j.at("model").get<std::string>();
  rec.repeat = j.at("repeat").get<int>();
  rec.split = j.at("split").get<std::string>();
  MetricsRow& r = rec.row;
  r.center = j.at("center").get<std::string>();
  r.detection.sensitivity = j.at("sensitivity").get<double>();
  r.detection.precision = j.at("precision").get<double>();
  r.detection.fpr = j.at("fpr").get<double>();
  r.detection.f1 = j.at("f1").get<double>();
  r.detection.f2 = j.at("f2").get<double>();
  r.contour.sdice = opt_from(j, "sdice");
  r.contour.hd95_mm = opt_from(j, "hd95_mm");
  r.contour.dice = opt_from(j, "dice");
  r.n_volumes = j.at("n_volumes").get<int>();
  r.n_ref_lesions = j.at("n_ref_lesions").get<int>();
  r.n_pred_lesions = j.value("n_pred_lesions", 0);
  r.out_of_brain_components = j.value("out_of_brain_components", 0);
  r.with_brain_mask = j.at("with_brain_mask").get<bool>();
  return rec;
}

Json metrics_document(const std::string& run, const std::string& strategy, const std::vector<MetricsRecord>& rows) {
  Json doc;
  doc["schema"] = kMetricsSchema;
  doc["run"] = run;
  doc["strategy"] = strategy;
  Json arr = Json::array();
  for (const auto& r : rows) arr.push_back(metrics_row_json(r));
  doc["rows"] = std::move(arr);
  return doc;
}

std::string format_table(const std::vector<TableLine>& lines) {
  const auto& cols = metric_columns();
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{""};
  for (const auto& c : cols) head.push_back(c.header);
  cells.push_back(head);
  for (const auto& line : lines) {
    std::vector<std::string> row{line.label};
    for (const auto& c : cols) {
      std::string s = line.masked ? cell(line.masked, c.key) : cell(line.unmasked, c.key);
      if (line.masked && line.unmasked) s += " [" + cell(line.unmasked, c.key) + "]";
      row.push_back(s);
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : cells)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::string out;
  for (const auto& r : cells) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      line += pad(r[i], width[i], i == 0);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

std::string format_records(const std::vector<MetricsRecord>& records) {
  // Keep first-seen order of (model, centre) groups.
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& r : records) {
    std::pair<std::string, std::string> k{r.model, r.row.center};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::vector<MetricsRow> storage;
  storage.reserve(keys.size() * 2);
  std::vector<TableLine> lines;
  std::set<std::string> models;
  for (const auto& r : records) models.insert(r.model);
  for (const auto& [model, center] : keys) {
    TableLine line;
    line.label = models.size() > 1 ? model + " / " + center : center;
    for (int masked = 1; masked >= 0; --masked) {
      std::vector<const MetricsRow*> rows;
      for (const auto& r : records)
        if (r.model == model && r.row.center == center && r.row.with_brain_mask == static_cast<bool>(masked))
          rows.push_back(&r.row);
      if (rows.empty()) continue;
      storage.push_back(average(rows));
      (masked ? line.masked : line.unmasked) = &storage.back();
    }
    lines.push_back(line);
  }
  return format_table(lines);
}

RunMetrics load_run_metrics(const fs::path& dir) {
  const fs::path file = dir / "metrics.json";
  if (!fs::exists(file)) throw Error(ErrorCode::IncompatibleRuns, "run directory '" + dir.string() + "' has no metrics.json");
  RunMetrics run;
  run.dir = dir.string();
  try {
    const auto bytes = binio::read_file(file);
    const Json doc = Json::parse(bytes.begin(), bytes.end());
    if (doc.at("schema").get<std::string>() != kMetricsSchema)
      throw Error(ErrorCode::IncompatibleRuns, "run directory '" + dir.string() + "' uses another metrics schema");
    run.run = doc.at("run").get<std::string>();
    run.strategy = doc.at("strategy").get<std::string>();
    for (const auto& r : doc.at("rows")) run.rows.push_back(metrics_row_from_json(r));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::IncompatibleRuns, "run directory '" + dir.string() + "': malformed metrics.json: " + e.what());
  }
  if (run.rows.empty()) throw Error(ErrorCode::IncompatibleRuns, "run directory '" + dir.string() + "' has no metric rows");
  return run;
}

ComparisonReport compare_runs(const std::vector<RunMetrics>& runs) {
  if (runs.size() < 2) throw Error(ErrorCode::IncompatibleRuns, "report needs at least two runs");
  using Cell = std::pair<std::string, bool>;  // centre, with mask
  auto cells_of = [](const RunMetrics& r) {
    std::set<Cell> s;
    for (const auto& row : r.rows) s.insert({row.row.center, row.row.with_brain_mask});
    return s;
  };
  const std::set<Cell> cells = cells_of(runs.front());
  for (const auto& r : runs)
    if (cells_of(r) != cells)
      throw Error(ErrorCode::IncompatibleRuns, "run '" + r.dir + "' covers different centres than '" + runs.front().dir + "'");

  std::vector<std::string> labels;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::string l = runs[i].run;
    if (std::count_if(runs.begin(), runs.end(), [&](const RunMetrics& o) { return o.run == l; }) > 1)
      l += "#" + std::to_string(i + 1);
    labels.push_back(l);
  }

  std::vector<std::string> keys;
  for (const auto& c : metric_columns()) keys.push_back(c.key);
  keys.push_back("dice");

  // values[run][cell][metric] ordered by repeat.
  auto series = [&](const RunMetrics& r, const Cell& c, const std::string& key) {
    std::vector<std::pair<int, double>> v;
    for (const auto& row : r.rows)
      if (row.row.center == c.first && row.row.with_brain_mask == c.second)
        if (const auto x = metric_value(row.row, key)) v.push_back({row.repeat, *x});
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (const auto& p : v) out.push_back(p.second);
    return out;
  };
  auto n_repeats = [](const RunMetrics& r) {
    std::set<int> s;
    for (const auto& row : r.rows) s.insert(row.repeat);
    return static_cast<int>(s.size());
  };

  Json j;
  j["runs"] = Json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    Json rj;
    rj["label"] = labels[i];
    rj["dir"] = runs[i].dir;
    rj["strategy"] = runs[i].strategy;
    rj["n_repeats"] = n_repeats(runs[i]);
    Json means = Json::array();
    for (const auto& c : cells) {
      Json m;
      m["center"] = c.first;
      m["with_brain_mask"] = c.second;
      for (const auto& k : keys) {
        const auto v = series(runs[i], c, k);
        m[k] = v.empty() ? Json(nullptr) : Json(std::accumulate(v.begin(), v.end(), 0.0) / v.size());
      }
      means.push_back(std::move(m));
    }
    rj["means"] = std::move(means);
    j["runs"].push_back(std::move(rj));
  }

  Json tests = Json::array();
  for (std::size_t a = 0; a < runs.size(); ++a)
    for (std::size_t b = a + 1; b < runs.size(); ++b)
      for (const auto& c : cells) {
        Json t;
        t["a"] = labels[a];
        t["b"] = labels[b];
        t["center"] = c.first;
        t["with_brain_mask"] = c.second;
        for (const auto& k : keys) {
          const auto va = series(runs[a], c, k), vb = series(runs[b], c, k);
          if (va.size() < 2 || vb.size() < 2)
            t[k] = nullptr;
          else
            t[k] = unpaired_t_test(va, vb).p;
        }
        tests.push_back(std::move(t));
      }
  j["p_values"] = std::move(tests);

  // Markdown: means per run on every cell, then one p-value matrix per metric
  // on the pooled (or only) centre with brain masks.
  std::ostringstream md;
  md << "# Run comparison\n\n";
  md << "| run | strategy | n_repeats |\n|---|---|---|\n";
  for (std::size_t i = 0; i < runs.size(); ++i)
    md << "| " << labels[i] << " | " << runs[i].strategy << " | " << n_repeats(runs[i]) << " |\n";
  for (const auto& c : cells) {
    md << "\n## " << c.first << (c.second ? " (with brain mask)" : " (without brain mask)") << "\n\n| run |";
    for (const auto& col : metric_columns()) md << " " << col.header << " |";
    md << "\n|---|";
    for (std::size_t k = 0; k < metric_columns().size(); ++k) md << "---|";
    md << "\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      md << "| " << labels[i] << " |";
      for (const auto& col : metric_columns()) {
        const auto v = series(runs[i], c, col.key);
        md << " " << (v.empty() ? "-" : fmt(std::accumulate(v.begin(), v.end(), 0.0) / v.size(), digits_for(col.key)))
           << " |";
      }
      md << "\n";
    }
  }
  const Cell focus = cells.count({"combined", true}) ? Cell{"combined", true} : *cells.begin();
  md << "\n## Unpaired t-test p-values (" << focus.first << (focus.second ? ", with brain mask" : ", without brain mask")
     << ")\n";
  for (const auto& col : metric_columns()) {
    md << "\n### " << col.header << "\n\n|   |";
    for (const auto& l : labels) md << " " << l << " |";
    md << "\n|---|";
    for (std::size_t k = 0; k < labels.size(); ++k) md << "---|";
    md << "\n";
    for (std::size_t a = 0; a < runs.size(); ++a) {
      md << "| " << labels[a] << " |";
      for (std::size_t b = 0; b < runs.size(); ++b) {
        const auto va = series(runs[a], focus, col.key), vb = series(runs[b], focus, col.key);
        md << " " << (va.size() < 2 || vb.size() < 2 ? "-" : fmt(unpaired_t_test(va, vb).p, 4)) << " |";
      }
      md << "\n";
    }
  }
  return {std::move(j), md.str()};
}

}  // namespace mclab
