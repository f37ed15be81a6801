#include "cb/workload.hpp"

#include <algorithm>
#include <cmath>

#include "cb/error.hpp"
#include "cb/sim.hpp"

namespace cb {

const char* to_string(Approach a) noexcept { return a == Approach::hybrid ? "hybrid" : "cloud_centric"; }

Approach parse_approach(std::string_view text) {
  if (text == "hybrid" || text == "edge+cloud") return Approach::hybrid;
  if (text == "cloud_centric" || text == "cloud-centric" || text == "cloud") return Approach::cloud_centric;
  throw Error(ErrorKind::execution, "workload.approach", "unknown approach '" + std::string(text) + "'");
}

WorkloadSpec workload_from_params(const ParamMap& params) {
  WorkloadSpec spec;
  auto get = [&](const char* key) -> const std::string* {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
  };
  try {
    if (const auto* v = get("approach")) spec.approach = parse_approach(*v);
    if (const auto* v = get("image_size")) spec.image_size_bytes = parse_size(*v);
    if (const auto* v = get("image_jitter")) spec.image_jitter_bytes = parse_size(*v);
    if (const auto* v = get("compression_ratio")) spec.compression_ratio = parse_fraction(*v);
    if (const auto* v = get("count")) spec.count = std::stoi(*v);
    if (const auto* v = get("interval")) spec.interval = parse_duration(*v, DurationUnit::seconds);
    if (const auto* v = get("edge_layer")) spec.edge_layer = *v;
    if (const auto* v = get("cloud_layer")) spec.cloud_layer = *v;
  } catch (const std::logic_error& e) {
    throw Error(ErrorKind::execution, "workload.params", std::string("invalid workload parameter: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::execution, "workload.params", std::string("invalid workload parameter: ") + e.what());
  }
  if (spec.image_size_bytes == 0) throw Error(ErrorKind::execution, "workload.params", "image_size must be > 0");
  if (!(spec.compression_ratio > 0 && spec.compression_ratio <= 1)) {
    throw Error(ErrorKind::execution, "workload.params", "compression_ratio must be in (0, 1]");
  }
  if (spec.count < 1) throw Error(ErrorKind::execution, "workload.params", "count must be >= 1");
  return spec;
}

std::uint64_t image_size(const WorkloadSpec& spec, int repetition, std::uint64_t seed) {
  if (spec.image_jitter_bytes == 0) return spec.image_size_bytes;
  Rng rng(Rng::derive(seed, "image", static_cast<std::uint64_t>(repetition)));
  const auto j = static_cast<std::int64_t>(spec.image_jitter_bytes);
  const auto raw = static_cast<std::int64_t>(spec.image_size_bytes) + rng.uniform_int(-j, j);
  return static_cast<std::uint64_t>(std::max<std::int64_t>(raw, 1));
}

namespace {

// ceil(raw * ratio), ignoring representation noise in the product.
std::uint64_t compressed_size(std::uint64_t raw, double ratio) {
  const double v = static_cast<double>(raw) * ratio;
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, v)) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(std::ceil(v));
}

}  // namespace

ProcessingSample simulate_image_pipeline(const WorkloadSpec& spec, const HostProfile& edge,
                                         const HostProfile& cloud, const LinkModel& link, int repetition,
                                         std::uint64_t seed) {
  ProcessingSample s;
  s.repetition = repetition;
  s.raw_bytes = image_size(spec, repetition, seed);
  const double raw = static_cast<double>(s.raw_bytes);
  if (spec.approach == Approach::hybrid) {
    s.t_preprocess = Seconds(raw / edge.compress_rate);
    s.bytes_sent = compressed_size(s.raw_bytes, spec.compression_ratio);
    s.t_postprocess = Seconds(raw / cloud.decompress_rate) + cloud.inference_time;
  } else {
    s.t_preprocess = Seconds(0);
    s.bytes_sent = s.raw_bytes;
    s.t_postprocess = cloud.inference_time;
  }
  s.t_transfer = transfer_time(s.bytes_sent, link);
  s.total = s.t_preprocess + s.t_transfer + s.t_postprocess;
  return s;
}

ResourceUsage model_resources(const HostProfile& profile, Seconds busy, Seconds window, int repetition,
                              std::uint64_t seed) {
  Rng rng(Rng::derive(seed, "cpu", static_cast<std::uint64_t>(repetition)));
  const double jitter = rng.uniform(-kCpuJitterPct, kCpuJitterPct);
  const double share = window.count() > 0 ? busy.count() / (window.count() * profile.cpu_cores) : 0.0;
  return ResourceUsage{profile.idle_cpu_pct + 100.0 * share + jitter, profile.working_set_gb};
}

std::uint64_t device_seed(std::uint64_t seed, const std::string& device) { return Rng::derive(seed, device); }

namespace {

Seconds window_for(const WorkloadSpec& spec, Seconds busy_span) { return std::max(spec.interval, busy_span); }

}  // namespace

std::vector<MetricSample> device_samples(const WorkloadSpec& spec, const Host& edge, const Host& cloud,
                                         const LinkModel& link, int repetition, std::uint64_t seed) {
  const auto name = edge.logical_name();
  const auto dseed = device_seed(seed, name);
  const auto s = simulate_image_pipeline(spec, edge.profile, cloud.profile, link, repetition, dseed);
  const auto usage = model_resources(edge.profile, s.t_preprocess, window_for(spec, s.total), repetition, dseed);
  return {
      {"processing_time_s", name, repetition, s.total.count(), "s"},
      {"preprocess_time_s", name, repetition, s.t_preprocess.count(), "s"},
      {"transfer_time_s", name, repetition, s.t_transfer.count(), "s"},
      {"postprocess_time_s", name, repetition, s.t_postprocess.count(), "s"},
      {"bytes_to_cloud", name, repetition, static_cast<double>(s.bytes_sent), "B"},
      {"cpu_pct", name, repetition, usage.cpu_pct, "%"},
      {"mem_gb", name, repetition, usage.mem_gb, "GB"},
  };
}

std::vector<MetricSample> cloud_samples(const WorkloadSpec& spec, const Host& cloud,
                                        const std::vector<ProcessingSample>& device_work, int repetition,
                                        std::uint64_t seed) {
  Seconds busy{0};
  Seconds span{0};
  for (const auto& w : device_work) {
    busy += w.t_postprocess;
    span = std::max(span, w.total);
  }
  const auto name = cloud.logical_name();
  const auto usage = model_resources(cloud.profile, busy, window_for(spec, span), repetition, device_seed(seed, name));
  return {
      {"cpu_pct", name, repetition, usage.cpu_pct, "%"},
      {"mem_gb", name, repetition, usage.mem_gb, "GB"},
  };
}

std::vector<MetricSample> run_workload(const WorkloadSpec& spec, const DeploymentPlan& plan, std::uint64_t seed) {
  const auto edges = plan.layer_hosts(spec.edge_layer);
  const auto clouds = plan.layer_hosts(spec.cloud_layer);
  if (edges.empty()) {
    throw Error(ErrorKind::execution, "workload.roles", "plan has no host in edge layer '" + spec.edge_layer + "'");
  }
  if (clouds.size() != 1) {
    throw Error(ErrorKind::execution, "workload.roles",
                "plan needs exactly one host in cloud layer '" + spec.cloud_layer + "', found " +
                    std::to_string(clouds.size()));
  }
  const Host& cloud = *clouds.front();
  std::vector<MetricSample> out;
  for (int rep = 0; rep < spec.count; ++rep) {
    std::vector<ProcessingSample> work;
    for (const auto* edge : edges) {
      const auto& link = plan.links.lookup(edge->id, cloud.id);
      auto samples = device_samples(spec, *edge, cloud, link, rep, seed);
      out.insert(out.end(), samples.begin(), samples.end());
      work.push_back(simulate_image_pipeline(spec, edge->profile, cloud.profile, link, rep,
                                             device_seed(seed, edge->logical_name())));
    }
    auto cs = cloud_samples(spec, cloud, work, rep, seed);
    out.insert(out.end(), cs.begin(), cs.end());
  }
  return out;
}

}  // namespace cb
