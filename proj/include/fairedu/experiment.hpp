#pragma once

// Repeated seeded trials of split -> (debias) -> train -> predict -> metrics,
// aggregated per (dataset, sensitive feature, model, method) cell.

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairedu/learners.hpp"
#include "fairedu/metrics.hpp"
#include "fairedu/tabular.hpp"

namespace fairedu {

enum class Method {
  Original,  // sensitive columns removed from the features, not residualized
  FairEdu,   // multi-attribute residualization
  Ltdd,      // single-attribute residualization, once per sensitive feature
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct DatasetSource {
  std::string name;
  std::filesystem::path data;
  std::filesystem::path recipe;
};

struct NamedModel {
  std::string name;
  ModelSpec spec;
};

struct ExperimentConfig {
  std::vector<DatasetSource> datasets;
  std::vector<NamedModel> models;
  std::vector<Method> methods{Method::Original, Method::FairEdu, Method::Ltdd};
  int repetitions = 100;
  std::uint64_t base_seed = 0;
  double train_fraction = 0.85;
  double threshold = 0.05;
  std::vector<std::string> sensitive;  // evaluated features; empty = all
  bool original_keeps_sensitive = false;
  unsigned threads = 1;

  void validate() const;

  /// Relative data/recipe paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct CellKey {
  std::string dataset;
  std::string sensitive;
  std::string model;
  std::string method;

  auto operator<=>(const CellKey&) const = default;
};

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> stddev;  // sample standard deviation, 0 for one trial
  std::optional<double> min;
  std::optional<double> max;
  int defined = 0;
  int undefined = 0;
  std::optional<double> percent_change;  // vs the Original cell
};

struct CellResult {
  CellKey key;
  int trials = 0;
  int failed_trials = 0;
  std::vector<std::string> errors;
  std::vector<std::optional<MetricReport>> per_trial;  // nullopt for failed trials
  std::map<std::string, MetricSummary> metrics;

  bool fully_failed() const { return trials > 0 && failed_trials == trials; }
};

struct ExperimentReport {
  std::vector<std::string> protocol;  // human-readable header lines
  std::vector<CellResult> cells;      // sorted by key

  const CellResult& cell(const CellKey& key) const;
  bool any_cell_failed() const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

/// Same protocol on already loaded datasets; `config.datasets` is ignored.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<std::pair<std::string, Dataset>>& datasets);

/// Mean/std/min/max over defined values, summed in trial order.
MetricSummary summarize(const std::vector<std::optional<double>>& values);

/// (after - before) / before * 100; 0 when equal, nullopt when before = 0.
std::optional<double> percent_change(double before, double after);

enum class Verdict { Win, Tie, Loss };
std::string to_string(Verdict v);

constexpr double kTieTolerance = 1e-4;

/// Lower fairness scores are better: win when strictly smaller beyond the
/// tie tolerance.
Verdict verdict(double before, double after);

struct ComparisonRow {
  CellKey key;
  std::string metric;
  double baseline = 0.0;
  double value = 0.0;
  std::optional<double> percent_change;
  Verdict verdict = Verdict::Tie;
};

/// One row per (non-baseline cell, fairness metric) with both means defined.
std::vector<ComparisonRow> compare(const ExperimentReport& report, const std::string& baseline_method);

/// Win/tie/loss tallies per method.
std::map<std::string, std::array<int, 3>> win_tie_loss(const std::vector<ComparisonRow>& rows);

std::string render_comparison(const std::vector<ComparisonRow>& rows);

enum class ReportFormat { Json, Csv, Markdown };
ReportFormat report_format_from_string(const std::string& s);

std::string render_report(const ExperimentReport& report, ReportFormat format);

/// Renders and writes atomically (temp file + rename).
void emit_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& path);

/// Writes `content` to `path` through a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace fairedu
