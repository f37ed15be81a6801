#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cb/error.hpp"
#include "cb/metrics.hpp"

using namespace cb;

namespace {

// t_{0.975, df}, inverted with mpmath at 40 digits (scipy.stats.t.ppf drifts
// by up to 3e-10 for small df).
const double kT975[] = {
    0, 12.706204736174705, 4.302652729749464, 3.1824463052837095, 2.7764451051977943,
    2.5705818356363155, 2.44691185114497, 2.3646242515927853, 2.3060041352041667, 2.2621571627982053,
    2.228138851986275, 2.2009851600916397, 2.178812829667229, 2.1603686564627926, 2.144786687917804,
    2.1314495455597755, 2.1199052992212546, 2.109815577833317, 2.1009220402410387, 2.0930240544083096,
    2.085963447265865, 2.0796138447276804, 2.0738730679040263, 2.0686576104190486, 2.063898561628026,
    2.0595385527532977, 2.055529438642873, 2.0518305164802855, 2.048407141795245, 2.0452296421327043,
    2.042272456301238,
};

RunArchive archive(const std::string& label, std::vector<MetricSample> samples) {
  RunArchive a;
  a.label = label;
  a.run_id = "run-" + label;
  a.samples = std::move(samples);
  return a;
}

}  // namespace

TEST(Accuracy, ReportedMeans) {
  EXPECT_NEAR(rep_accuracy({27, 24, 8, 6.5}), 1 - std::abs(24.0 / 27 - 6.5 / 8), 1e-15);
  EXPECT_NEAR(rep_accuracy({27, 24, 8, 6.5}), 0.92361, 1e-5);
  EXPECT_NEAR(rep_accuracy({13, 11, 5.5, 4}), 0.88112, 1e-5);
  EXPECT_NEAR(rep_accuracy({96, 81, 108.8, 89.2}), 0.97610, 1e-5);
  EXPECT_NEAR(rep_accuracy({4.4, 4.2, 5.1, 5.0}), 0.97415, 1e-5);
  EXPECT_DOUBLE_EQ(rep_accuracy({0.38, 0.38, 1.1, 1.1}), 1.0);
}

TEST(Accuracy, Invariants) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> d(0.01, 1000);
  for (int i = 0; i < 5000; ++i) {
    const MetricQuad q{d(g), d(g), d(g), d(g)};
    const double a = rep_accuracy(q);
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
    // Symmetric in the two teams and in the two treatments.
    EXPECT_DOUBLE_EQ(a, rep_accuracy({q.x1r, q.x2r, q.x1a, q.x2a}));
    EXPECT_DOUBLE_EQ(a, rep_accuracy({q.x2a, q.x1a, q.x2r, q.x1r}));
    // Scale-free per team.
    const double k = d(g);
    EXPECT_NEAR(a, rep_accuracy({q.x1a * k, q.x2a * k, q.x1r, q.x2r}), 1e-12);
    // Identical ratios are a perfect score.
    EXPECT_DOUBLE_EQ(rep_accuracy({q.x1a, q.x2a, q.x1a * 3, q.x2a * 3}), 1.0);
  }
}

TEST(Accuracy, DomainErrors) {
  for (const MetricQuad q : {MetricQuad{0, 1, 1, 1}, MetricQuad{1, -1, 1, 1}, MetricQuad{1, 1, NAN, 1}}) {
    try {
      rep_accuracy(q);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "metrics.domain");
    }
  }
}

TEST(Accuracy, OrderingConsistency) {
  EXPECT_TRUE(ordering_consistent({27, 24, 8, 6.5}));
  EXPECT_FALSE(ordering_consistent({27, 24, 6.5, 8}));
  EXPECT_TRUE(ordering_consistent({0.38, 0.38, 1.1, 1.1}));
  EXPECT_FALSE(ordering_consistent({0.38, 0.38, 1.1, 1.2}));
}

TEST(StudentT, QuantileTable) {
  for (int df = 1; df <= 30; ++df) {
    EXPECT_NEAR(student_t_quantile(0.975, df), kT975[df], 1e-9) << "df " << df;
  }
  EXPECT_NEAR(student_t_quantile(0.975, 99), 1.9842169515864175, 1e-9);
  EXPECT_NEAR(student_t_quantile(0.95, 5), 2.0150483733330242, 1e-9);
  EXPECT_NEAR(student_t_quantile(0.995, 10), 3.1692726726169513, 1e-9);
  EXPECT_NEAR(student_t_quantile(0.025, 4), -kT975[4], 1e-9);
  EXPECT_NEAR(student_t_quantile(0.5, 7), 0.0, 1e-12);
}

TEST(StudentT, Cdf) {
  EXPECT_NEAR(student_t_cdf(1.3, 7), 0.8826160823038114, 1e-12);
  EXPECT_DOUBLE_EQ(student_t_cdf(0, 3), 0.5);
  for (int df = 1; df <= 30; ++df) EXPECT_NEAR(student_t_cdf(kT975[df], df), 0.975, 1e-12);
  EXPECT_NEAR(regularized_incomplete_beta(2, 3, 0.4), 0.5248, 1e-12);  // 1 - (0.6^4 + 4*0.4*0.6^3)
  EXPECT_THROW(student_t_quantile(1.0, 3), Error);
}

TEST(MeanCi, MatchesTabulatedInterval) {
  std::mt19937_64 g(8);
  std::normal_distribution<double> d(50, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 30;
    std::vector<double> xs(n);
    for (auto& x : xs) x = d(g);
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    const auto s = mean_ci95(xs);
    ASSERT_EQ(s.n, n);
    EXPECT_NEAR(s.mean, mean, 1e-9);
    EXPECT_NEAR(s.stddev, sd, 1e-9);
    EXPECT_NEAR(s.ci95_half_width, kT975[n - 1] * sd / std::sqrt(double(n)), 1e-9);
  }
}

TEST(MeanCi, OneTwoThree) {
  const auto s = mean_ci95({1, 2, 3});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.stddev, 1.0);
  // t_{0.975,2} / sqrt(3) = 4.302652729749464 / 1.7320508075688772.
  EXPECT_NEAR(s.ci95_half_width, 2.484137711750331, 1e-12);
}

TEST(MeanCi, NeedsTwoSamples) {
  try {
    mean_ci95({4.2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "metrics.sample_size");
  }
  EXPECT_DOUBLE_EQ(mean_ci95({5, 5, 5}).ci95_half_width, 0.0);
}

TEST(Compare, SelfComparisonIsPerfect) {
  std::vector<RunArchive> runs;
  double base = 10;
  for (const char* label : {"cloud_centric-15kbit", "hybrid-15kbit", "cloud_centric-25kbit", "hybrid-25kbit"}) {
    std::vector<MetricSample> s;
    for (int rep = 0; rep < 3; ++rep) {
      s.push_back({"processing_time_s", "edge.client.0", rep, base + rep, "s"});
      s.push_back({"processing_time_s", "cloud.server.0", rep, 1000, "s"});  // excluded by host filter
      s.push_back({"bytes_to_cloud", "edge.client.0", rep, base * 100, "B"});
      s.push_back({"cpu_pct", "edge.client.0", rep, base / 2, "%"});
      s.push_back({"mem_gb", "edge.client.0", rep, 0.38, "GB"});
    }
    runs.push_back(archive(label, s));
    base -= 2;
  }
  const auto report = compare_runs(runs, runs, savanna_pairing());
  ASSERT_EQ(report.rows.size(), 5u);
  for (const auto& row : report.rows) {
    EXPECT_DOUBLE_EQ(row.accuracy, 1.0) << row.entry.name;
    EXPECT_TRUE(row.ordering_consistent) << row.entry.name;
  }
  EXPECT_TRUE(report.all_consistent());
  EXPECT_DOUBLE_EQ(report.overall_min_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(report.rows[0].quad.x1a, 11.0);  // cloud_centric-15kbit, edge only
  EXPECT_NE(render_text(report).find("processing_time_15kbit"), std::string::npos);
  EXPECT_NE(render_json(report).find("\"ordering_consistent\": true"), std::string::npos);
}

TEST(Compare, MissingMetricAndRun) {
  const std::vector<RunArchive> runs = {archive("a", {{"x", "h.s.0", 0, 1, "s"}}),
                                        archive("b", {{"x", "h.s.0", 0, 2, "ms"}})};
  try {
    metric_mean(runs[0], "y");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "compare.missing_metric");
  }
  try {
    compare_runs(runs, runs, {{"row", "x", "a", "c", "*"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "compare.missing_run");
  }
  try {
    compare_runs(runs, runs, {{"row", "x", "a", "b", "*"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "compare.unit_mismatch");
  }
}

TEST(Summary, PerLayerRows) {
  const std::vector<RunArchive> runs = {archive("hybrid-15kbit", {{"cpu_pct", "edge.client.0", 0, 4, "%"},
                                                                   {"cpu_pct", "edge.client.0", 1, 6, "%"},
                                                                   {"cpu_pct", "cloud.server.0", 0, 1, "%"}})};
  const auto rows = summarize_runs(runs);
  ASSERT_EQ(rows.size(), 2u);
  const auto& edge = rows[0].layer == "edge" ? rows[0] : rows[1];
  const auto& cloud = rows[0].layer == "edge" ? rows[1] : rows[0];
  EXPECT_DOUBLE_EQ(edge.mean, 5.0);
  EXPECT_EQ(edge.n, 2u);
  EXPECT_NEAR(edge.ci95_half_width, kT975[1] * std::sqrt(2.0) / std::sqrt(2.0), 1e-9);
  EXPECT_TRUE(std::isnan(cloud.ci95_half_width));
  EXPECT_NE(summary_csv(rows).find("hybrid-15kbit"), std::string::npos);
  EXPECT_NE(summary_text(rows).find('#'), std::string::npos);
  EXPECT_TRUE(summarize_runs(runs, std::string("mem_gb")).empty());
}
