#include <gtest/gtest.h>

#include <limits>
#include <map>

#include "cb/netem.hpp"
#include "cb/provider.hpp"
#include "cb/workload.hpp"

using namespace cb;

namespace {

const ProfileCatalog& catalog() {
  static const auto c = ProfileCatalog::defaults();
  return c;
}

WorkloadSpec spec(Approach a, double ratio = 0.8) {
  WorkloadSpec s;
  s.approach = a;
  s.compression_ratio = ratio;
  return s;
}

LinkModel uplink(double rate) { return LinkModel::make(Seconds(0.075), rate, 0); }

double total(Approach a, double rate, double ratio = 0.8, const char* edge = "rpi3", const char* cloud = "dahu") {
  return simulate_image_pipeline(spec(a, ratio), catalog().at(edge), catalog().at(cloud), uplink(rate), 0, 1)
      .total.count();
}

Host host(const char* layer, const char* service, const char* profile) {
  Host h;
  h.id = std::string("sim-") + profile + "-0";
  h.layer = layer;
  h.service = service;
  h.profile = catalog().at(profile);
  return h;
}

double value(const std::vector<MetricSample>& samples, const std::string& metric) {
  for (const auto& s : samples) {
    if (s.metric == metric) return s.value;
  }
  ADD_FAILURE() << "missing " << metric;
  return 0;
}

}  // namespace

// Default rpi3/dahu profiles, 40000 B image, 150 ms round trip.
TEST(Workload, ProcessingTimeOracle) {
  EXPECT_NEAR(total(Approach::hybrid, 25000), 10.415, 1e-9);
  EXPECT_NEAR(total(Approach::cloud_centric, 25000), 12.925, 1e-9);
  EXPECT_NEAR(total(Approach::hybrid, 15000), 17.241666666666667, 1e-9);
  EXPECT_NEAR(total(Approach::cloud_centric, 15000), 21.458333333333333, 1e-9);
}

TEST(Workload, StageBreakdown) {
  const auto s = simulate_image_pipeline(spec(Approach::hybrid), catalog().at("rpi3"), catalog().at("dahu"),
                                         uplink(25000), 3, 1);
  EXPECT_EQ(s.repetition, 3);
  EXPECT_EQ(s.raw_bytes, 40000u);
  EXPECT_EQ(s.bytes_sent, 32000u);
  EXPECT_NEAR(s.t_preprocess.count(), 0.04, 1e-12);
  EXPECT_NEAR(s.t_transfer.count(), 10.315, 1e-12);
  EXPECT_NEAR(s.t_postprocess.count(), 0.06, 1e-12);
  EXPECT_DOUBLE_EQ(s.total.count(), (s.t_preprocess + s.t_transfer + s.t_postprocess).count());
}

TEST(Workload, BytesSentRatioIsExact) {
  for (std::uint64_t raw : {1u, 7u, 1000u, 40000u, 123457u}) {
    for (double r : {0.1, 0.25, 0.5, 0.8, 1.0}) {
      WorkloadSpec ws = spec(Approach::hybrid, r);
      ws.image_size_bytes = raw;
      const auto s = simulate_image_pipeline(ws, catalog().at("rpi3"), catalog().at("dahu"), uplink(1e4), 0, 1);
      const double exact = static_cast<double>(raw) * r;
      EXPECT_GE(static_cast<double>(s.bytes_sent), exact - 1e-6);
      EXPECT_LT(static_cast<double>(s.bytes_sent), exact + 1);
    }
  }
  WorkloadSpec ws = spec(Approach::hybrid);
  const auto h = simulate_image_pipeline(ws, catalog().at("rpi3"), catalog().at("dahu"), uplink(1e4), 0, 1);
  ws.approach = Approach::cloud_centric;
  const auto c = simulate_image_pipeline(ws, catalog().at("rpi3"), catalog().at("dahu"), uplink(1e4), 0, 1);
  EXPECT_EQ(h.bytes_sent * 10, c.bytes_sent * 8);
}

TEST(Workload, RatioOneOnlyAddsCodecCost) {
  const auto& edge = catalog().at("rpi3");
  const auto& cloud = catalog().at("dahu");
  for (double rate : {1e3, 15e3, 1e6}) {
    const double gap = total(Approach::hybrid, rate, 1.0) - total(Approach::cloud_centric, rate);
    EXPECT_NEAR(gap, 40000 / edge.compress_rate + 40000 / cloud.decompress_rate, 1e-9);
  }
}

// Hybrid wins exactly when the transfer time saved outweighs compress +
// decompress; the gap shrinks as bandwidth grows.
TEST(Workload, HybridDominanceMatchesAnalyticCondition) {
  const double raw = 40000;
  for (double ratio : {0.3, 0.5, 0.8, 0.95}) {
    double previous_gap = std::numeric_limits<double>::infinity();
    for (double rate = 5e3; rate <= 5e7; rate *= 1.7) {
      const double gap = total(Approach::cloud_centric, rate) - total(Approach::hybrid, rate, ratio);
      const double predicted = raw * (1 - ratio) * 8 / rate - raw / 1.0e6 - raw / 4.0e6;
      EXPECT_NEAR(gap, predicted, 1e-9) << "ratio " << ratio << " rate " << rate;
      EXPECT_LT(gap, previous_gap);
      previous_gap = gap;
    }
  }
  for (double rate : {5e3, 15e3, 25e3, 1e5, 5e5}) {
    EXPECT_LT(total(Approach::hybrid, rate), total(Approach::cloud_centric, rate)) << rate;
  }
}

TEST(Workload, FasterProfilesAreFaster) {
  EXPECT_LT(total(Approach::hybrid, 25000, 0.8, "rpi4", "skylake"), total(Approach::hybrid, 25000));
  EXPECT_LT(total(Approach::cloud_centric, 25000, 0.8, "rpi4", "skylake"), total(Approach::cloud_centric, 25000));
}

TEST(Workload, JitterStaysInRangeAndIsSeeded) {
  WorkloadSpec ws;
  ws.image_jitter_bytes = 5000;
  std::map<std::uint64_t, int> seen;
  for (int rep = 0; rep < 500; ++rep) {
    const auto n = image_size(ws, rep, 11);
    EXPECT_GE(n, 35000u);
    EXPECT_LE(n, 45000u);
    EXPECT_EQ(n, image_size(ws, rep, 11));
    ++seen[n];
  }
  EXPECT_GT(seen.size(), 100u);
  ws.image_jitter_bytes = 0;
  EXPECT_EQ(image_size(ws, 17, 11), 40000u);
}

TEST(Workload, CpuDifferenceIsOnlyTheBusyShare) {
  const auto edge = host("edge", "client", "rpi3");
  const auto cloud = host("cloud", "server", "dahu");
  const auto link = uplink(15000);
  for (int rep = 0; rep < 20; ++rep) {
    const auto h = device_samples(spec(Approach::hybrid), edge, cloud, link, rep, 42);
    const auto c = device_samples(spec(Approach::cloud_centric), edge, cloud, link, rep, 42);
    // 40 ms compression in a 30 s window on 4 cores.
    EXPECT_NEAR(value(h, "cpu_pct") - value(c, "cpu_pct"), 100.0 * 0.04 / (30.0 * 4), 1e-9);
    EXPECT_DOUBLE_EQ(value(h, "mem_gb"), 0.38);
    EXPECT_NEAR(value(c, "cpu_pct"), 4.3, kCpuJitterPct + 1e-12);
  }
}

TEST(Workload, DeviceSamplesCarryLogicalNames) {
  const auto edge = host("edge", "client", "rpi3");
  const auto cloud = host("cloud", "server", "dahu");
  const auto samples = device_samples(spec(Approach::hybrid), edge, cloud, uplink(25000), 0, 42);
  ASSERT_EQ(samples.size(), 7u);
  for (const auto& s : samples) EXPECT_EQ(s.host, "edge.client.0");
  EXPECT_NEAR(value(samples, "processing_time_s"), 10.415, 1e-9);
  EXPECT_DOUBLE_EQ(value(samples, "bytes_to_cloud"), 32000);
}

TEST(Workload, ParamsParsing) {
  const auto s = workload_from_params({{"approach", "cloud-centric"}, {"image_size", "20kB"}, {"count", "5"},
                                       {"compression_ratio", "50%"}, {"interval", "10s"}});
  EXPECT_EQ(s.approach, Approach::cloud_centric);
  EXPECT_EQ(s.image_size_bytes, 20000u);
  EXPECT_EQ(s.count, 5);
  EXPECT_DOUBLE_EQ(s.compression_ratio, 0.5);
  EXPECT_DOUBLE_EQ(s.interval.count(), 10.0);
  EXPECT_EQ(workload_from_params({{"approach", "edge+cloud"}}).approach, Approach::hybrid);
  EXPECT_THROW(workload_from_params({{"approach", "fog"}}), Error);
  EXPECT_THROW(workload_from_params({{"compression_ratio", "0"}}), Error);
  EXPECT_THROW(workload_from_params({{"image_size", "0B"}}), Error);
  EXPECT_THROW(workload_from_params({{"count", "many"}}), Error);
}

TEST(Workload, RunWorkloadNeedsRoles) {
  DeploymentPlan plan;
  plan.hosts = {host("edge", "client", "rpi3")};
  EXPECT_THROW(run_workload(WorkloadSpec{}, plan, 1), Error);
  plan.hosts.push_back(host("cloud", "server", "dahu"));
  plan.hosts.back().id = "sim-dahu-0";
  plan.links.set(plan.hosts[0].id, plan.hosts[1].id, uplink(25000));
  WorkloadSpec ws;
  ws.count = 3;
  const auto samples = run_workload(ws, plan, 1);
  EXPECT_EQ(samples.size(), 3u * (7 + 2));
  EXPECT_EQ(samples, run_workload(ws, plan, 1));
}
