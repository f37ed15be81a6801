#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cb/workflow.hpp"

namespace cb {

// ---------------------------------------------------------------------------
// Replicability accuracy
// ---------------------------------------------------------------------------

// One metric under two treatments, measured by two teams.
struct MetricQuad {
  double x1a = 0;  // authors, treatment 1
  double x2a = 0;  // authors, treatment 2
  double x1r = 0;  // readers, treatment 1
  double x2r = 0;  // readers, treatment 2
};

// 1 - |min/max(authors) - min/max(readers)|. Throws Error(usage,
// "metrics.domain") unless all four values are > 0.
double rep_accuracy(const MetricQuad& q);

// sign(x1a - x2a) == sign(x1r - x2r); exact ties only match exact ties.
bool ordering_consistent(const MetricQuad& q);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
// Inverse of student_t_cdf; p in (0, 1).
double student_t_quantile(double p, double df);

struct SummaryStat {
  double mean = 0;
  double stddev = 0;  // sample standard deviation
  double ci95_half_width = 0;
  std::size_t n = 0;
};

// Student-t interval mean +/- t_{(1+c)/2, n-1} * s / sqrt(n). Needs n >= 2.
SummaryStat mean_ci95(const std::vector<double>& samples, double confidence = 0.95);

// ---------------------------------------------------------------------------
// Run comparison
// ---------------------------------------------------------------------------

// One row of a comparison: `metric` restricted to hosts matching `hosts`,
// treatment 1 vs treatment 2 identified by run label.
struct PairingEntry {
  std::string name;
  std::string metric;
  std::string treatment1;
  std::string treatment2;
  std::string hosts = "*";
};

// processing time at 15 and 25 Kbit, data sent, edge CPU and memory.
// Run labels are "<approach>-<rate>", e.g. "hybrid-15kbit".
std::vector<PairingEntry> savanna_pairing();

struct ComparisonRow {
  PairingEntry entry;
  std::string unit;
  MetricQuad quad;
  double accuracy = 0;
  bool ordering_consistent = false;
};

struct ReplicabilityReport {
  std::vector<ComparisonRow> rows;
  double overall_min_accuracy = 1.0;
  bool all_consistent() const;
};

// Mean of every sample of `metric` on matching hosts; throws
// Error(usage, "compare.missing_metric") when there is none, and
// Error(usage, "compare.unit_mismatch") when units disagree.
struct MetricMean {
  double mean = 0;
  std::string unit;
  std::size_t n = 0;
};
MetricMean metric_mean(const RunArchive& run, const std::string& metric, const std::string& hosts = "*");

// Throws Error(usage, "compare.missing_run") for labels absent from either side.
ReplicabilityReport compare_runs(const std::vector<RunArchive>& authors, const std::vector<RunArchive>& readers,
                                 const std::vector<PairingEntry>& pairing);

std::string render_text(const ReplicabilityReport& report);
std::string render_json(const ReplicabilityReport& report);

// ---------------------------------------------------------------------------
// Run summaries
// ---------------------------------------------------------------------------

// Per run label, metric and layer: n, mean and 95 % half-width (NaN when n < 2).
struct SummaryRow {
  std::string label;
  std::string metric;
  std::string layer;
  std::string unit;
  std::size_t n = 0;
  double mean = 0;
  double ci95_half_width = 0;
};

std::vector<SummaryRow> summarize_runs(const std::vector<RunArchive>& runs,
                                       const std::optional<std::string>& metric = std::nullopt);
std::string summary_csv(const std::vector<SummaryRow>& rows);
// Aligned table with a '#' bar per row scaled to the largest mean of its metric.
std::string summary_text(const std::vector<SummaryRow>& rows);

}  // namespace cb
