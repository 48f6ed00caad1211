#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mclab/dataset_io.hpp"
#include "mclab/fedtrain.hpp"

namespace mclab {

inline constexpr const char* kMetricsSchema = "mclab-metrics-v1";

/// One evaluated (model, repeat, centre, split, mask) cell.
struct MetricsRecord {
  std::string model;
  int repeat = 0;
  std::string split = "test";
  MetricsRow row;
};

Json metrics_row_json(const MetricsRecord& rec);
MetricsRecord metrics_row_from_json(const Json& j);

/// Run-level document: {"schema","run","strategy","rows":[...]}.
Json metrics_document(const std::string& run, const std::string& strategy, const std::vector<MetricsRecord>& rows);

/// Metric names in table order, with the JSON key of each.
struct MetricColumn {
  const char* header;
  const char* key;
};
const std::vector<MetricColumn>& metric_columns();

/// Value of a metric column for a row; empty when undefined (e.g. no detected lesion).
std::optional<double> metric_value(const MetricsRow& row, const std::string& key);

/// Aligned plain-text table. Each line shows the masked value followed by the
/// unmasked one in brackets when both are present.
struct TableLine {
  std::string label;
  const MetricsRow* masked = nullptr;
  const MetricsRow* unmasked = nullptr;
};
std::string format_table(const std::vector<TableLine>& lines);

/// Table over all records (averaged across repeats when several are present).
std::string format_records(const std::vector<MetricsRecord>& records);

struct RunMetrics {
  std::string dir;
  std::string run;
  std::string strategy;
  std::vector<MetricsRecord> rows;
};

/// Reads `<dir>/metrics.json`; throws IncompatibleRuns naming the directory when the
/// file is missing or does not follow the schema.
RunMetrics load_run_metrics(const std::filesystem::path& dir);

struct ComparisonReport {
  Json json;
  std::string markdown;
};

/// Per-metric means across repeats for every run, and pairwise Welch p-values
/// between runs on every (centre, mask, metric) cell. Throws IncompatibleRuns when the
/// runs do not share the same set of centres.
ComparisonReport compare_runs(const std::vector<RunMetrics>& runs);

}  // namespace mclab
