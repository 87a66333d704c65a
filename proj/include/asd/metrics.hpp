#pragma once

// Threshold-free evaluation: per-domain AUC, per-section partial AUC over
// the lowest-FPR region, harmonic-mean totals, and the thresholded
// precision/recall statistics.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asd/dataset.hpp"

namespace asd::metrics {

// Half: ties count 1/2 (Mann-Whitney). Literal: ties count 0.
enum class TieMode { Half, Literal };

inline constexpr double kDefaultFpr = 0.1;

// Fraction of (normal, anomaly) pairs ranked correctly, O(n log n).
double auc(std::span<const double> normals, std::span<const double> anomalies, TieMode ties = TieMode::Half);

// AUC of all anomalies against the floor(p * N-) highest-scoring normals.
double pauc(std::span<const double> normals, std::span<const double> anomalies, double p = kDefaultFpr,
            TieMode ties = TieMode::Half);

std::size_t pauc_normal_count(std::size_t normals, double p);

// n / sum(1 / v); 0 if any value is 0.
double hmean(std::span<const double> values);
double amean(std::span<const double> values);

struct LabeledScore {
  double score = 0.0;
  dataset::Label label = dataset::Label::Normal;
  dataset::Domain domain = dataset::Domain::Source;
  int section = 0;
  std::string machine_type;
};

struct SectionResult {
  std::string machine_type;
  int section = 0;
  double auc_source = 0.0;
  double auc_target = 0.0;
  double pauc = 0.0;
  int normals_source = 0;
  int normals_target = 0;
  int anomalies = 0;
};

struct MetricSummary {
  double hmean = 0.0;  // over all sections of all machine types
  double amean = 0.0;
  std::map<std::string, double> per_machine;  // hmean over that machine's sections
};

struct EvalReport {
  double p = kDefaultFpr;
  std::vector<SectionResult> sections;  // sorted by (machine_type, section)
  MetricSummary auc_source;
  MetricSummary auc_target;
  MetricSummary pauc;
  double omega_hmean = 0.0;
  double omega_amean = 0.0;
  std::map<std::string, std::string> provenance;  // seed, backend, config_digest, ...

  std::vector<std::string> machine_types() const;
};

EvalReport total_score(std::span<const LabeledScore> scores, double p = kDefaultFpr, TieMode ties = TieMode::Half);

// Arithmetic mean of every metric value across reports with identical
// section layout (the "Average" rows of a multi-seed table).
EvalReport average_reports(std::span<const EvalReport> reports);

std::string render_csv(const EvalReport& report);
std::string render_sections_csv(const EvalReport& report);
std::string render_text(const EvalReport& report);
// Reads what render_csv wrote (table rows and provenance; no per-section detail).
EvalReport parse_csv(const std::string& text);

struct DecisionInput {
  std::string machine_type;
  int section = 0;
  bool predicted_anomaly = false;
  bool is_anomaly = false;
};

struct DecisionStats {
  std::string machine_type;
  int section = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  std::optional<double> precision;  // empty when the denominator is zero
  std::optional<double> recall;
  std::optional<double> f1;
};

std::vector<DecisionStats> decision_stats(std::span<const DecisionInput> decisions);
DecisionStats confusion_stats(int tp, int fp, int fn, int tn);

}  // namespace asd::metrics
