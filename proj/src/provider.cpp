#include "cb/provider.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>

#include "cb/sim.hpp"
#include "json.hpp"

namespace cb {

// ---------------------------------------------------------------------------
// profiles
// ---------------------------------------------------------------------------

void check_profile(const HostProfile& p) {
  auto fail = [&](const char* field) {
    throw ConfigError("config.profile", "profile '" + p.name + "'", std::string(field) + " must be > 0");
  };
  if (p.name.empty()) throw ConfigError("config.profile", "profiles", "profile name must be non-empty");
  if (p.cpu_cores <= 0) fail("cpu_cores");
  if (!(p.cpu_hz > 0)) fail("cpu_hz");
  if (p.mem_bytes == 0) fail("mem_bytes");
  if (!(p.compress_rate > 0)) fail("compress_rate");
  if (!(p.decompress_rate > 0)) fail("decompress_rate");
  if (!(p.inference_time.count() > 0)) fail("inference_time");
  if (p.idle_cpu_pct < 0) fail("idle_cpu_pct");
  if (p.working_set_gb < 0) fail("working_set_gb");
}

ProfileCatalog ProfileCatalog::defaults() {
  ProfileCatalog c;
  // Raspberry Pi 3 Model B: 4x Cortex-A53 @ 1.2 GHz, 1 GB.
  c.add({"rpi3", 4, 1.2e9, 1'000'000'000, 1.0e6, 4.0e6, Seconds(0.5), 4.3, 0.38});
  // Raspberry Pi 4: 4x Cortex-A72 @ 1.5 GHz, 8 GB. Throughputs scale by 1.5/1.2.
  c.add({"rpi4", 4, 1.5e9, 8'000'000'000, 1.25e6, 5.0e6, Seconds(0.4), 5.0, 1.1});
  // Grid'5000 dahu: Xeon Gold 6130 @ 2.1 GHz, 16 cores, 192 GB.
  c.add({"dahu", 16, 2.1e9, 192'000'000'000, 2.0e7, 4.0e6, Seconds(0.05), 1.0, 2.0});
  // Chameleon Skylake: Xeon Gold 6126 @ 2.6 GHz, 12 cores, 192 GB. Scaled by 2.6/2.1.
  c.add({"skylake", 12, 2.6e9, 192'000'000'000, 2.0e7 * 2.6 / 2.1, 4.0e6 * 2.6 / 2.1,
         Seconds(0.05 * 2.1 / 2.6), 1.0, 2.0});
  return c;
}

namespace {

double parse_hz(const std::string& text) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr == text.data()) {
    throw ConfigError("config.value", "profiles.yaml", "invalid frequency '" + text + "'");
  }
  std::string suffix(ptr, text.data() + text.size());
  std::erase(suffix, ' ');
  std::transform(suffix.begin(), suffix.end(), suffix.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (suffix.empty() || suffix == "hz") return v;
  if (suffix == "khz") return v * 1e3;
  if (suffix == "mhz") return v * 1e6;
  if (suffix == "ghz") return v * 1e9;
  throw ConfigError("config.value", "profiles.yaml", "invalid frequency '" + text + "'");
}

// Byte rates written as "1MB/s" or a bare (possibly fractional) number, which
// is what serialize() emits.
double parse_byte_rate(std::string text) {
  if (text.ends_with("/s")) text.resize(text.size() - 2);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc{} && ptr == text.data() + text.size()) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw ConfigError("config.value", "profiles.yaml", "invalid byte rate '" + text + "'");
    }
    return v;
  }
  return static_cast<double>(parse_size(text));
}

}  // namespace

ProfileCatalog ProfileCatalog::parse(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config.syntax", "profiles.yaml:" + std::to_string(e.mark.line + 1), "syntax error: " + e.msg);
  }
  ProfileCatalog out;
  if (root.IsNull()) return out;
  if (!root.IsMap()) throw ConfigError("config.type", "profiles.yaml", "document must be a mapping");
  const auto builtin = defaults();
  for (const auto& kv : root) {
    const auto name = kv.first.as<std::string>();
    HostProfile p = builtin.contains(name) ? builtin.at(name) : HostProfile{};
    p.name = name;
    if (!kv.second.IsMap()) throw ConfigError("config.type", "profiles.yaml:" + name, "expected a mapping");
    for (const auto& f : kv.second) {
      const auto key = f.first.as<std::string>();
      const auto value = f.second.as<std::string>();
      try {
        if (key == "cpu_cores") {
          p.cpu_cores = f.second.as<int>();
        } else if (key == "cpu_hz") {
          p.cpu_hz = parse_hz(value);
        } else if (key == "mem_bytes") {
          p.mem_bytes = parse_size(value);
        } else if (key == "compress_rate") {
          p.compress_rate = parse_byte_rate(value);
        } else if (key == "decompress_rate") {
          p.decompress_rate = parse_byte_rate(value);
        } else if (key == "inference_time") {
          p.inference_time = parse_duration(value, DurationUnit::seconds);
        } else if (key == "idle_cpu_pct") {
          p.idle_cpu_pct = f.second.as<double>();
        } else if (key == "working_set_gb") {
          p.working_set_gb = f.second.as<double>();
        } else {
          throw ConfigError("config.unknown_key", "profiles.yaml:" + name, "unknown field '" + key + "'");
        }
      } catch (const YAML::Exception&) {
        throw ConfigError("config.value", "profiles.yaml:" + name + "." + key, "invalid value '" + value + "'");
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError("config.value", "profiles.yaml:" + name + "." + key, e.what());
      }
    }
    out.add(std::move(p));
  }
  return out;
}

void ProfileCatalog::add(HostProfile profile) {
  check_profile(profile);
  auto name = profile.name;
  profiles_.insert_or_assign(std::move(name), std::move(profile));
}

void ProfileCatalog::merge(const ProfileCatalog& other) {
  for (const auto& [name, p] : other.profiles_) profiles_.insert_or_assign(name, p);
}

bool ProfileCatalog::contains(std::string_view name) const { return profiles_.find(name) != profiles_.end(); }

const HostProfile& ProfileCatalog::at(std::string_view name) const {
  auto it = profiles_.find(name);
  if (it == profiles_.end()) {
    throw Error(ErrorKind::provider, "provider.unknown_profile", "unknown profile '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<std::string> ProfileCatalog::names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : profiles_) out.push_back(name);
  return out;
}

std::string ProfileCatalog::serialize() const {
  YAML::Emitter e;
  e << YAML::BeginMap;
  for (const auto& [name, p] : profiles_) {
    e << YAML::Key << name << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "cpu_cores" << YAML::Value << p.cpu_cores;
    e << YAML::Key << "cpu_hz" << YAML::Value << format_double(p.cpu_hz);
    e << YAML::Key << "mem_bytes" << YAML::Value << p.mem_bytes;
    e << YAML::Key << "compress_rate" << YAML::Value << format_double(p.compress_rate);
    e << YAML::Key << "decompress_rate" << YAML::Value << format_double(p.decompress_rate);
    e << YAML::Key << "inference_time" << YAML::Value << format_duration(p.inference_time);
    e << YAML::Key << "idle_cpu_pct" << YAML::Value << format_double(p.idle_cpu_pct);
    e << YAML::Key << "working_set_gb" << YAML::Value << format_double(p.working_set_gb);
    e << YAML::EndMap;
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string Host::logical_name() const { return layer + "." + service + "." + std::to_string(instance_index); }

// ---------------------------------------------------------------------------
// simulated provider
// ---------------------------------------------------------------------------

namespace {

void check_request(const ResourceRequest& req, const ProfileCatalog& catalog) {
  if (req.quantity < 1) {
    throw Error(ErrorKind::provider, "provider.precondition",
                "resource request quantity must be >= 1, got " + std::to_string(req.quantity));
  }
  if (!catalog.contains(req.profile)) {
    throw Error(ErrorKind::provider, "provider.unknown_profile",
                "profile '" + req.profile + "' is not in the provider catalog");
  }
}

}  // namespace

SimulatedProvider::SimulatedProvider(ProfileCatalog catalog, std::uint64_t seed,
                                     std::map<std::string, int> capacity, int default_capacity)
    : catalog_(std::move(catalog)),
      seed_(seed),
      capacity_(std::move(capacity)),
      default_capacity_(default_capacity) {}

SimulatedProvider::Pool& SimulatedProvider::pool_for(const std::string& profile) {
  auto it = pools_.find(profile);
  if (it == pools_.end()) {
    Pool pool;
    auto cap = capacity_.find(profile);
    pool.capacity = cap != capacity_.end() ? cap->second : default_capacity_;
    for (int i = 0; i < pool.capacity; ++i) pool.free.insert(i);
    it = pools_.emplace(profile, std::move(pool)).first;
  }
  return it->second;
}

ResourceGrant SimulatedProvider::acquire(const ResourceRequest& req) {
  check_request(req, catalog_);
  std::lock_guard lock(mu_);
  Pool& pool = pool_for(req.profile);
  const int available = static_cast<int>(pool.free.size());
  if (available < req.quantity) {
    throw Error(ErrorKind::provider, "provider.capacity",
                "capacity exceeded for profile '" + req.profile + "': requested " + std::to_string(req.quantity) +
                    ", available " + std::to_string(available) + ", short by " +
                    std::to_string(req.quantity - available));
  }
  ResourceGrant grant;
  grant.grant_id = "sim-grant-" + std::to_string(next_grant_++);
  grant.provider = name();
  grant.environment = req.environment;
  grant.expires_at = req.lease_duration;
  std::vector<std::pair<std::string, int>> taken;
  const auto& profile = catalog_.at(req.profile);
  for (int i = 0; i < req.quantity; ++i) {
    const int ordinal = *pool.free.begin();
    pool.free.erase(pool.free.begin());
    taken.emplace_back(req.profile, ordinal);
    Host h;
    h.id = "sim-" + req.profile + "-" + std::to_string(ordinal);
    h.profile = profile;
    const auto bits = Rng::derive(seed_, req.profile, static_cast<std::uint64_t>(ordinal));
    h.address = "10." + std::to_string((bits >> 16) & 0xff) + "." + std::to_string((bits >> 8) & 0xff) + "." +
                std::to_string(bits & 0xff);
    grant.hosts.push_back(std::move(h));
  }
  outstanding_.emplace(grant.grant_id, std::move(taken));
  return grant;
}

void SimulatedProvider::release(const ResourceGrant& grant) {
  std::lock_guard lock(mu_);
  auto it = outstanding_.find(grant.grant_id);
  if (it == outstanding_.end()) {
    if (released_.contains(grant.grant_id)) {
      throw Error(ErrorKind::provider, "provider.double_release", "grant '" + grant.grant_id + "' already released");
    }
    throw Error(ErrorKind::provider, "provider.unknown_grant", "unknown grant '" + grant.grant_id + "'");
  }
  for (const auto& [profile, ordinal] : it->second) pool_for(profile).free.insert(ordinal);
  released_.insert(grant.grant_id);
  outstanding_.erase(it);
}

int SimulatedProvider::available(std::string_view profile) const {
  std::lock_guard lock(mu_);
  auto it = pools_.find(profile);
  if (it != pools_.end()) return static_cast<int>(it->second.free.size());
  return capacity(profile);
}

int SimulatedProvider::capacity(std::string_view profile) const {
  auto it = capacity_.find(std::string(profile));
  return it != capacity_.end() ? it->second : default_capacity_;
}

// ---------------------------------------------------------------------------
// mock and testbed stubs
// ---------------------------------------------------------------------------

ResourceGrant MockProvider::acquire(const ResourceRequest& req) {
  check_request(req, catalog_);
  std::lock_guard lock(mu_);
  requests_.push_back(req);
  ResourceGrant grant;
  grant.grant_id = "mock-grant-" + std::to_string(next_++);
  grant.provider = name();
  grant.environment = req.environment;
  grant.expires_at = req.lease_duration;
  for (int i = 0; i < req.quantity; ++i) {
    Host h;
    h.id = grant.grant_id + "-host-" + std::to_string(i);
    h.profile = catalog_.at(req.profile);
    h.address = "mock://" + h.id;
    grant.hosts.push_back(std::move(h));
  }
  outstanding_.insert(grant.grant_id);
  return grant;
}

void MockProvider::release(const ResourceGrant& grant) {
  std::lock_guard lock(mu_);
  if (outstanding_.erase(grant.grant_id) == 0) {
    throw Error(ErrorKind::provider, "provider.unknown_grant", "unknown or released grant '" + grant.grant_id + "'");
  }
  releases_.push_back(grant.grant_id);
}

std::vector<ResourceRequest> MockProvider::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::vector<std::string> MockProvider::releases() const {
  std::lock_guard lock(mu_);
  return releases_;
}

ResourceGrant TestbedProvider::acquire(const ResourceRequest&) {
  throw Error(ErrorKind::provider, "provider.not_configured",
              "provider '" + kind_ + "' is not configured in this build; use --provider simulated");
}

void TestbedProvider::release(const ResourceGrant& grant) {
  throw Error(ErrorKind::provider, "provider.unknown_grant", "unknown grant '" + grant.grant_id + "'");
}

// ---------------------------------------------------------------------------
// registry
// ---------------------------------------------------------------------------

ProviderRegistry ProviderRegistry::with_defaults(const ProfileCatalog& catalog, std::uint64_t seed) {
  ProviderRegistry r;
  r.add(std::make_unique<SimulatedProvider>(catalog, seed));
  r.add(std::make_unique<MockProvider>(catalog));
  for (const char* kind : {"g5k", "iotlab", "chameleon", "chi-edge"}) {
    r.add(std::make_unique<TestbedProvider>(kind, catalog));
  }
  return r;
}

void ProviderRegistry::add(std::unique_ptr<Provider> provider) {
  auto name = provider->name();
  providers_.insert_or_assign(std::move(name), std::move(provider));
}

bool ProviderRegistry::contains(std::string_view name) const { return providers_.find(name) != providers_.end(); }

Provider& ProviderRegistry::get(std::string_view name) const {
  auto it = providers_.find(name);
  if (it == providers_.end()) {
    throw Error(ErrorKind::provider, "provider.unknown_provider", "unknown provider '" + std::string(name) + "'");
  }
  return *it->second;
}

ResourceGrant ProviderRegistry::acquire(const ResourceRequest& request, std::string_view provider) const {
  return get(provider).acquire(request);
}

void ProviderRegistry::release(const ResourceGrant& grant) const { get(grant.provider).release(grant); }

// ---------------------------------------------------------------------------
// deployment plans
// ---------------------------------------------------------------------------

const Host* DeploymentPlan::find(const InstanceKey& key) const {
  for (const auto& h : hosts) {
    if (h.layer == key.layer && h.service == key.service && h.instance_index == key.index) return &h;
  }
  return nullptr;
}

const Host& DeploymentPlan::at(const InstanceKey& key) const {
  const auto* h = find(key);
  if (h == nullptr) {
    throw Error(ErrorKind::provider, "provider.unknown_instance",
                "no host for " + key.layer + "." + key.service + "." + std::to_string(key.index));
  }
  return *h;
}

const Host* DeploymentPlan::find_by_id(std::string_view id) const {
  for (const auto& h : hosts) {
    if (h.id == id) return &h;
  }
  return nullptr;
}

std::vector<const Host*> DeploymentPlan::select(const Selector& selector) const {
  std::vector<const Host*> out;
  for (const auto& h : hosts) {
    if (selector.matches(h.layer, h.service, h.instance_index)) out.push_back(&h);
  }
  return out;
}

std::vector<const Host*> DeploymentPlan::layer_hosts(std::string_view layer) const {
  std::vector<const Host*> out;
  for (const auto& h : hosts) {
    if (h.layer == layer) out.push_back(&h);
  }
  return out;
}

std::vector<ResourceRequest> resource_requests(const LayersServicesConfig& cfg) {
  std::vector<ResourceRequest> out;
  for (const auto& layer : cfg.layers) {
    for (const auto& svc : layer.services) {
      auto it = std::find_if(out.begin(), out.end(), [&](const ResourceRequest& r) {
        return r.environment == svc.environment && r.profile == svc.profile;
      });
      if (it == out.end()) {
        out.push_back({svc.environment, svc.profile, svc.quantity, Seconds(3600)});
      } else {
        it->quantity += svc.quantity;
      }
    }
  }
  return out;
}

DeploymentPlan map_services(const LayersServicesConfig& cfg, const std::vector<ResourceGrant>& grants) {
  struct Slot {
    const Host* host;
    const std::string* environment;
    bool used = false;
  };
  std::vector<Slot> slots;
  for (const auto& g : grants) {
    for (const auto& h : g.hosts) slots.push_back({&h, &g.environment});
  }

  DeploymentPlan plan;
  for (const auto& layer : cfg.layers) {
    for (const auto& svc : layer.services) {
      const auto fits = [&](const Slot& s) {
        return s.host->profile.name == svc.profile && *s.environment == svc.environment;
      };
      const auto granted = std::count_if(slots.begin(), slots.end(), fits);
      if (granted == 0) {
        throw Error(ErrorKind::provider, "provider.profile_mismatch",
                    "service " + layer.name + "." + svc.name + " requires profile '" + svc.profile +
                        "' in environment '" + svc.environment + "' but no granted host matches");
      }
      for (int i = 0; i < svc.quantity; ++i) {
        auto it = std::find_if(slots.begin(), slots.end(), [&](const Slot& s) { return !s.used && fits(s); });
        if (it == slots.end()) {
          throw Error(ErrorKind::provider, "provider.shortfall",
                      "service " + layer.name + "." + svc.name + " needs " + std::to_string(svc.quantity) +
                          " host(s) with profile '" + svc.profile + "', short by " + std::to_string(svc.quantity - i));
        }
        it->used = true;
        Host h = *it->host;
        h.layer = layer.name;
        h.service = svc.name;
        h.instance_index = i;
        plan.hosts.push_back(std::move(h));
      }
    }
  }
  return plan;
}

std::string plan_to_json(const DeploymentPlan& plan) {
  nlohmann::ordered_json j;
  j["hosts"] = nlohmann::ordered_json::array();
  for (const auto& h : plan.hosts) {
    j["hosts"].push_back({{"instance", h.logical_name()},
                          {"id", h.id},
                          {"address", h.address},
                          {"profile", h.profile.name},
                          {"cpu_cores", h.profile.cpu_cores},
                          {"cpu_hz", h.profile.cpu_hz},
                          {"mem_bytes", h.profile.mem_bytes}});
  }
  j["links"] = nlohmann::ordered_json::array();
  for (const auto& [key, m] : plan.links.entries()) {
    j["links"].push_back({{"src", key.first},
                          {"dst", key.second},
                          {"one_way_delay_s", m.one_way_delay.count()},
                          {"rate_bps", m.rate},
                          {"loss", m.loss},
                          {"mtu_chunk", m.mtu_chunk}});
  }
  return j.dump(2);
}

}  // namespace cb
