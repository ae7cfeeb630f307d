#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "persono/orchestrator.hpp"

namespace persono {

// Positive class is urgent.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion_matrix(std::span<const UrgencyLabel> predicted,
                                 std::span<const UrgencyLabel> truth);
// Aligns by notification id; throws EvaluationError on length or id mismatch.
ConfusionMatrix confusion_matrix(std::span<const ClassificationResult> results,
                                 std::span<const LabeledNotification> truth);

// Empty denominators leave the metric unset (not applicable).
struct ConfusionMetrics {
  std::optional<double> accuracy;
  std::optional<double> fnr;
  std::optional<double> specificity;
};

ConfusionMetrics confusion_metrics(const ConfusionMatrix& m);

// Mann-Whitney: P(score_pos > score_neg) with ties counted half. Unset for single-class truth.
std::optional<double> auroc(std::span<const double> scores, std::span<const UrgencyLabel> truth);

// I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
// Two-tailed p for Student t with `df` degrees of freedom.
double student_t_two_tailed_p(double t, double df);

struct TTestResult {
  std::size_t n = 0;
  int df = 0;
  std::optional<double> t;  // unset when n < 2 or the differences have zero variance
  std::optional<double> p;
  bool applicable() const { return t.has_value(); }
};

// Paired test on d = a - b with the sample standard deviation.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

enum class Metric { accuracy, fnr, specificity, auroc };
inline constexpr std::array<Metric, 4> kMetrics{Metric::accuracy, Metric::fnr, Metric::specificity,
                                                Metric::auroc};
std::string_view to_string(Metric metric);
std::string_view display_name(Metric metric);

struct CellMetrics {
  ConfusionMatrix confusion;
  ConfusionMetrics rates;
  std::optional<double> auroc;

  std::optional<double> get(Metric metric) const;
};

CellMetrics score_run(const ConfigurationRun& run, const DatasetBundle& bundle);

struct GridCell {
  ConfigurationRun run;
  CellMetrics metrics;
  bool complete() const { return run.complete(); }
};

struct MeanStat {
  std::optional<double> mean;
  std::size_t participants = 0;  // cells contributing
  std::size_t not_applicable = 0;
};

struct ConfigSummary {
  Configuration config;
  std::array<MeanStat, 4> means;  // indexed like kMetrics
  std::size_t incomplete_cells = 0;
};

struct Comparison {
  Configuration first;
  Configuration second;
  Metric metric = Metric::accuracy;
  TTestResult test;
};

struct EvaluationReport {
  std::vector<Configuration> configurations;
  std::vector<std::string> participants;
  std::vector<GridCell> cells;  // participant-major
  std::vector<ConfigSummary> summaries;
  std::vector<Comparison> comparisons;
  nlohmann::json metadata;

  const GridCell* cell(const std::string& participant, const Configuration& config) const;
};

struct GridOptions {
  RunOptions run;
  unsigned threads = 1;  // cells evaluated concurrently
};

// Macro averages over complete cells; headline comparisons are paired over participants.
EvaluationReport run_grid(std::span<const DatasetBundle> bundles, const BackendFactory& backends,
                          std::span<const Configuration> configurations,
                          const GridOptions& options = {});

// Test pairs reported when both configurations were run.
std::vector<std::pair<Configuration, Configuration>> headline_pairs();

nlohmann::json report_to_json(const EvaluationReport& report);

// Four metric rows by the seven configuration columns, then the paired tests.
std::string render_table(const EvaluationReport& report);

// Published reference values in the same layout, 4 metric rows x 7 columns.
struct ReferenceRow {
  Metric metric;
  std::array<double, 7> values;
};
std::span<const ReferenceRow> published_reference();
std::string render_reference_table();

}  // namespace persono
