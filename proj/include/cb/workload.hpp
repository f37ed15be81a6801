#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cb/config.hpp"
#include "cb/netem.hpp"
#include "cb/provider.hpp"
#include "cb/units.hpp"
#include "cb/workflow.hpp"

namespace cb {

// Savanna image pipeline: edge devices capture an image, optionally compress
// it, send it to a single cloud host that decompresses and classifies it.

enum class Approach { cloud_centric, hybrid };

const char* to_string(Approach a) noexcept;
Approach parse_approach(std::string_view text);

struct WorkloadSpec {
  Approach approach = Approach::hybrid;
  std::uint64_t image_size_bytes = 40'000;
  std::uint64_t image_jitter_bytes = 0;  // raw size drawn from base +/- jitter
  double compression_ratio = 0.8;        // compressed / raw
  int count = 100;
  Seconds interval{30};
  std::string edge_layer = "edge";
  std::string cloud_layer = "cloud";
};

// Keys: approach, image_size, image_jitter, compression_ratio, count,
// interval, edge_layer, cloud_layer. Absent keys keep defaults.
WorkloadSpec workload_from_params(const ParamMap& params);

struct ProcessingSample {
  int repetition = 0;
  Seconds t_preprocess{0};
  Seconds t_transfer{0};
  Seconds t_postprocess{0};
  Seconds total{0};
  std::uint64_t raw_bytes = 0;
  std::uint64_t bytes_sent = 0;
};

// Raw image size for a repetition; uniform in [base - jitter, base + jitter].
std::uint64_t image_size(const WorkloadSpec& spec, int repetition, std::uint64_t seed);

ProcessingSample simulate_image_pipeline(const WorkloadSpec& spec, const HostProfile& edge,
                                         const HostProfile& cloud, const LinkModel& link, int repetition,
                                         std::uint64_t seed);

// Half-width of the uniform jitter added to modelled CPU utilisation, in
// percentage points.
inline constexpr double kCpuJitterPct = 0.1;

// Baseline + busy share of the window + seeded jitter; memory is the
// profile's fixed working set.
struct ResourceUsage {
  double cpu_pct = 0;
  double mem_gb = 0;
};
ResourceUsage model_resources(const HostProfile& profile, Seconds busy, Seconds window, int repetition,
                              std::uint64_t seed);

// Per-device seed so each edge device sees a different image sequence. Keyed
// by logical instance name, so it does not depend on which testbed hosts it.
std::uint64_t device_seed(std::uint64_t seed, const std::string& device);

// Samples emitted by one device for one repetition: processing_time_s,
// preprocess_time_s, transfer_time_s, postprocess_time_s, bytes_to_cloud,
// cpu_pct, mem_gb.
std::vector<MetricSample> device_samples(const WorkloadSpec& spec, const Host& edge, const Host& cloud,
                                         const LinkModel& link, int repetition, std::uint64_t seed);

// cpu_pct and mem_gb for the cloud host, busy with every device's postprocessing.
std::vector<MetricSample> cloud_samples(const WorkloadSpec& spec, const Host& cloud,
                                        const std::vector<ProcessingSample>& device_work, int repetition,
                                        std::uint64_t seed);

// Whole campaign without the workflow engine: spec.count repetitions over
// every edge host in the plan, plus cloud-host resource samples. Throws
// Error(execution) unless the plan has >= 1 edge host and exactly 1 cloud host.

std::vector<MetricSample> run_workload(const WorkloadSpec& spec, const DeploymentPlan& plan, std::uint64_t seed);

}  // namespace cb
