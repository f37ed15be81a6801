#include "cb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "cb/config.hpp"
#include "cb/error.hpp"
#include "json.hpp"

namespace cb {

double rep_accuracy(const MetricQuad& q) {
  if (!(q.x1a > 0 && q.x2a > 0 && q.x1r > 0 && q.x2r > 0)) {
    throw Error(ErrorKind::usage, "metrics.domain", "replicability accuracy needs four positive values");
  }
  const double ra = std::min(q.x1a, q.x2a) / std::max(q.x1a, q.x2a);
  const double rr = std::min(q.x1r, q.x2r) / std::max(q.x1r, q.x2r);
  return 1.0 - std::abs(ra - rr);
}

namespace {
int sign(double v) { return (v > 0) - (v < 0); }
}  // namespace

bool ordering_consistent(const MetricQuad& q) { return sign(q.x1a - q.x2a) == sign(q.x1r - q.x2r); }

// ---------------------------------------------------------------------------

namespace {

double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw Error(ErrorKind::usage, "metrics.domain", "incomplete beta needs a, b > 0");
  if (!(x >= 0 && x <= 1)) throw Error(ErrorKind::usage, "metrics.domain", "incomplete beta needs x in [0, 1]");
  if (x == 0 || x == 1) return x;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0)) throw Error(ErrorKind::usage, "metrics.domain", "degrees of freedom must be > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
  return t > 0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
  if (!(p > 0 && p < 1)) throw Error(ErrorKind::usage, "metrics.domain", "quantile needs p in (0, 1)");
  if (!(df > 0)) throw Error(ErrorKind::usage, "metrics.domain", "degrees of freedom must be > 0");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, df);
  // Upper-tail probability is what the incomplete beta gives accurately.
  const double target = 1.0 - p;
  auto upper = [df](double t) { return 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)); };
  double lo = 0.0;
  double hi = 1.0;
  while (upper(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) return std::numeric_limits<double>::infinity();
  }
  for (int i = 0; i < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon() * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (upper(mid) > target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

SummaryStat mean_ci95(const std::vector<double>& samples, double confidence) {
  if (samples.size() < 2) {
    throw Error(ErrorKind::usage, "metrics.sample_size", "a confidence interval needs at least 2 samples");
  }
  if (!(confidence > 0 && confidence < 1)) {
    throw Error(ErrorKind::usage, "metrics.domain", "confidence must be in (0, 1)");
  }
  SummaryStat s;
  s.n = samples.size();
  const double n = static_cast<double>(s.n);
  double sum = 0;
  for (double v : samples) sum += v;
  s.mean = sum / n;
  double ss = 0;
  for (double v : samples) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / (n - 1));
  const double t = student_t_quantile((1.0 + confidence) / 2.0, n - 1);
  s.ci95_half_width = t * s.stddev / std::sqrt(n);
  return s;
}

// ---------------------------------------------------------------------------

std::vector<PairingEntry> savanna_pairing() {
  return {
      {"processing_time_15kbit", "processing_time_s", "cloud_centric-15kbit", "hybrid-15kbit", "edge"},
      {"processing_time_25kbit", "processing_time_s", "cloud_centric-25kbit", "hybrid-25kbit", "edge"},
      {"data_sent", "bytes_to_cloud", "cloud_centric-15kbit", "hybrid-15kbit", "edge"},
      {"cpu", "cpu_pct", "cloud_centric-15kbit", "hybrid-15kbit", "edge"},
      {"memory", "mem_gb", "cloud_centric-15kbit", "hybrid-15kbit", "edge"},
  };
}

bool ReplicabilityReport::all_consistent() const {
  return std::all_of(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.ordering_consistent; });
}

namespace {

bool host_matches(const Selector& sel, const std::string& host) {
  const auto d1 = host.find('.');
  const auto d2 = d1 == std::string::npos ? std::string::npos : host.find('.', d1 + 1);
  if (d2 == std::string::npos) return sel.layer == "*" && sel.service == "*" && !sel.index;
  int index = 0;
  try {
    index = std::stoi(host.substr(d2 + 1));
  } catch (const std::exception&) {
    return false;
  }
  return sel.matches(host.substr(0, d1), host.substr(d1 + 1, d2 - d1 - 1), index);
}

std::string layer_of(const std::string& host) { return host.substr(0, host.find('.')); }

const RunArchive& find_label(const std::vector<RunArchive>& runs, const std::string& label, const char* side) {
  for (const auto& r : runs) {
    if (r.label == label) return r;
  }
  throw Error(ErrorKind::usage, "compare.missing_run",
              std::string("no run labelled '") + label + "' among the " + side + " runs");
}

}  // namespace

MetricMean metric_mean(const RunArchive& run, const std::string& metric, const std::string& hosts) {
  const auto sel = Selector::parse(hosts);
  MetricMean m;
  double sum = 0;
  for (const auto& s : run.samples) {
    if (s.metric != metric || !host_matches(sel, s.host)) continue;
    if (m.n == 0) {
      m.unit = s.unit;
    } else if (s.unit != m.unit) {
      throw Error(ErrorKind::usage, "compare.unit_mismatch",
                  "metric '" + metric + "' in run " + run.run_id + " mixes units " + m.unit + " and " + s.unit);
    }
    sum += s.value;
    ++m.n;
  }
  if (m.n == 0) {
    throw Error(ErrorKind::usage, "compare.missing_metric",
                "run " + run.run_id + " (" + run.label + ") has no '" + metric + "' samples on " + hosts);
  }
  m.mean = sum / static_cast<double>(m.n);
  return m;
}

ReplicabilityReport compare_runs(const std::vector<RunArchive>& authors, const std::vector<RunArchive>& readers,
                                 const std::vector<PairingEntry>& pairing) {
  ReplicabilityReport report;
  for (const auto& entry : pairing) {
    const auto a1 = metric_mean(find_label(authors, entry.treatment1, "authors'"), entry.metric, entry.hosts);
    const auto a2 = metric_mean(find_label(authors, entry.treatment2, "authors'"), entry.metric, entry.hosts);
    const auto r1 = metric_mean(find_label(readers, entry.treatment1, "readers'"), entry.metric, entry.hosts);
    const auto r2 = metric_mean(find_label(readers, entry.treatment2, "readers'"), entry.metric, entry.hosts);
    if (a1.unit != a2.unit || a1.unit != r1.unit || a1.unit != r2.unit) {
      throw Error(ErrorKind::usage, "compare.unit_mismatch", "metric '" + entry.metric + "' has mismatched units");
    }
    ComparisonRow row;
    row.entry = entry;
    row.unit = a1.unit;
    row.quad = MetricQuad{a1.mean, a2.mean, r1.mean, r2.mean};
    row.accuracy = rep_accuracy(row.quad);
    row.ordering_consistent = ordering_consistent(row.quad);
    report.overall_min_accuracy = std::min(report.overall_min_accuracy, row.accuracy);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

std::string render_text(const ReplicabilityReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "metric" << std::setw(14) << "authors t1" << std::setw(14) << "authors t2"
      << std::setw(14) << "readers t1" << std::setw(14) << "readers t2" << std::setw(10) << "accuracy"
      << "consistent\n";
  for (const auto& r : report.rows) {
    out << std::left << std::setw(24) << r.entry.name << std::setw(14) << fixed(r.quad.x1a, 4) << std::setw(14)
        << fixed(r.quad.x2a, 4) << std::setw(14) << fixed(r.quad.x1r, 4) << std::setw(14) << fixed(r.quad.x2r, 4)
        << std::setw(10) << fixed(r.accuracy, 3) << (r.ordering_consistent ? "yes" : "NO") << "\n";
  }
  out << "overall minimum accuracy: " << fixed(report.overall_min_accuracy, 3) << "\n";
  out << "conclusions consistent: " << (report.all_consistent() ? "yes" : "no") << "\n";
  return out.str();
}

std::string render_json(const ReplicabilityReport& report) {
  nlohmann::ordered_json j;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["name"] = r.entry.name;
    row["metric"] = r.entry.metric;
    row["hosts"] = r.entry.hosts;
    row["treatment1"] = r.entry.treatment1;
    row["treatment2"] = r.entry.treatment2;
    row["unit"] = r.unit;
    row["quad"] = {{"x1a", r.quad.x1a}, {"x2a", r.quad.x2a}, {"x1r", r.quad.x1r}, {"x2r", r.quad.x2r}};
    row["accuracy"] = r.accuracy;
    row["ordering_consistent"] = r.ordering_consistent;
    rows.push_back(std::move(row));
  }
  j["per_metric"] = std::move(rows);
  j["overall_min_accuracy"] = report.overall_min_accuracy;
  j["all_consistent"] = report.all_consistent();
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::vector<SummaryRow> summarize_runs(const std::vector<RunArchive>& runs, const std::optional<std::string>& metric) {
  std::vector<SummaryRow> out;
  for (const auto& run : runs) {
    // (metric, layer) in first-appearance order.
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<double>> values;
    std::map<std::pair<std::string, std::string>, std::string> units;
    for (const auto& s : run.samples) {
      if (metric && s.metric != *metric) continue;
      const auto key = std::make_pair(s.metric, layer_of(s.host));
      auto [it, fresh] = values.try_emplace(key);
      if (fresh) {
        order.push_back(key);
        units[key] = s.unit;
      }
      it->second.push_back(s.value);
    }
    for (const auto& key : order) {
      const auto& v = values[key];
      SummaryRow row;
      row.label = run.label.empty() ? run.run_id : run.label;
      row.metric = key.first;
      row.layer = key.second;
      row.unit = units[key];
      row.n = v.size();
      if (v.size() >= 2) {
        const auto st = mean_ci95(v);
        row.mean = st.mean;
        row.ci95_half_width = st.ci95_half_width;
      } else {
        row.mean = v.front();
        row.ci95_half_width = std::numeric_limits<double>::quiet_NaN();
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "label,metric,layer,unit,n,mean,ci95_half_width\n";
  for (const auto& r : rows) {
    out += r.label + "," + r.metric + "," + r.layer + "," + r.unit + "," + std::to_string(r.n) + "," +
           format_double(r.mean) + "," + (std::isnan(r.ci95_half_width) ? "" : format_double(r.ci95_half_width)) +
           "\n";
  }
  return out;
}

std::string summary_text(const std::vector<SummaryRow>& rows) {
  constexpr int kBarWidth = 30;
  std::map<std::string, double> peak;
  for (const auto& r : rows) peak[r.metric] = std::max(peak[r.metric], std::abs(r.mean));
  std::ostringstream out;
  out << std::left << std::setw(24) << "run" << std::setw(20) << "metric" << std::setw(8) << "layer"
      << std::setw(6) << "n" << std::setw(26) << "mean +/- ci95" << "\n";
  for (const auto& r : rows) {
    std::string value = fixed(r.mean, 4);
    value += std::isnan(r.ci95_half_width) ? " (n<2)" : " +/- " + fixed(r.ci95_half_width, 4);
    value += " " + r.unit;
    const double p = peak[r.metric];
    const int bar = p > 0 ? static_cast<int>(std::lround(kBarWidth * std::abs(r.mean) / p)) : 0;
    out << std::left << std::setw(24) << r.label << std::setw(20) << r.metric << std::setw(8) << r.layer
        << std::setw(6) << r.n << std::setw(26) << value << std::string(static_cast<std::size_t>(bar), '#') << "\n";
  }
  return out.str();
}

}  // namespace cb
