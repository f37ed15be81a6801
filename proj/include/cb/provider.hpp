#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cb/config.hpp"
#include "cb/netem.hpp"
#include "cb/units.hpp"

namespace cb {

// Hardware description of a leasable machine. Core count, clock and memory
// describe the device; the throughput fields are calibration parameters for
// the simulated pipeline and are always overridable from profiles.yaml.
struct HostProfile {
  std::string name;
  int cpu_cores = 1;
  double cpu_hz = 1e9;
  std::uint64_t mem_bytes = 1'000'000'000;
  double compress_rate = 1e6;    // bytes/s
  double decompress_rate = 4e6;  // bytes/s
  Seconds inference_time{0.05};
  double idle_cpu_pct = 1.0;     // resource model baseline
  double working_set_gb = 0.1;   // resource model memory footprint

  bool operator==(const HostProfile&) const = default;
};

// Throws ConfigError if any rate or count is not strictly positive.
void check_profile(const HostProfile& profile);

class ProfileCatalog {
 public:
  ProfileCatalog() = default;

  // rpi3, rpi4, dahu, skylake.
  static ProfileCatalog defaults();
  // profiles.yaml: map of profile name -> fields. Missing fields inherit the
  // built-in profile of the same name, or HostProfile defaults.
  static ProfileCatalog parse(std::string_view text);

  void add(HostProfile profile);
  void merge(const ProfileCatalog& other);  // other wins
  bool contains(std::string_view name) const;
  const HostProfile& at(std::string_view name) const;
  std::vector<std::string> names() const;

  std::string serialize() const;

 private:
  std::map<std::string, HostProfile, std::less<>> profiles_;
};

struct ResourceRequest {
  std::string environment;
  std::string profile;
  int quantity = 1;
  Seconds lease_duration{3600};
};

// A concrete machine. `layer`, `service` and `instance_index` are filled in
// by map_services; a freshly acquired host has them empty.
struct Host {
  std::string id;
  std::string layer;
  std::string service;
  int instance_index = 0;
  HostProfile profile;
  std::string address;

  // "layer.service.index"
  std::string logical_name() const;
};

struct ResourceGrant {
  std::string grant_id;
  std::string provider;
  std::string environment;
  std::vector<Host> hosts;
  Seconds expires_at{0};  // on the provider's clock
};

class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string name() const = 0;
  virtual const ProfileCatalog& catalog() const = 0;
  virtual ResourceGrant acquire(const ResourceRequest& request) = 0;
  virtual void release(const ResourceGrant& grant) = 0;
};

// Deterministic in-process pool. Host ids and grant ids depend only on the
// seed and on the sequence of calls.
class SimulatedProvider final : public Provider {
 public:
  SimulatedProvider(ProfileCatalog catalog, std::uint64_t seed,
                    std::map<std::string, int> capacity = {}, int default_capacity = 64);

  std::string name() const override { return "simulated"; }
  const ProfileCatalog& catalog() const override { return catalog_; }
  ResourceGrant acquire(const ResourceRequest& request) override;
  void release(const ResourceGrant& grant) override;

  int available(std::string_view profile) const;
  int capacity(std::string_view profile) const;

 private:
  struct Pool {
    int capacity = 0;
    std::set<int> free;  // host ordinals
  };

  Pool& pool_for(const std::string& profile);

  ProfileCatalog catalog_;
  std::uint64_t seed_;
  std::map<std::string, int> capacity_;
  int default_capacity_;

  mutable std::mutex mu_;
  std::map<std::string, Pool, std::less<>> pools_;
  std::map<std::string, std::vector<std::pair<std::string, int>>> outstanding_;
  std::set<std::string> released_;
  std::uint64_t next_grant_ = 1;
};

// Unlimited capacity; records every call. Useful for dry runs and tests.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(ProfileCatalog catalog) : catalog_(std::move(catalog)) {}

  std::string name() const override { return "mock"; }
  const ProfileCatalog& catalog() const override { return catalog_; }
  ResourceGrant acquire(const ResourceRequest& request) override;
  void release(const ResourceGrant& grant) override;

  std::vector<ResourceRequest> requests() const;
  std::vector<std::string> releases() const;

 private:
  ProfileCatalog catalog_;
  mutable std::mutex mu_;
  std::vector<ResourceRequest> requests_;
  std::vector<std::string> releases_;
  std::set<std::string> outstanding_;
  std::uint64_t next_ = 1;
};

// Placeholder for a real testbed driver (g5k, iotlab, chameleon, chi-edge).
// acquire always fails with provider.not_configured.
class TestbedProvider final : public Provider {
 public:
  TestbedProvider(std::string kind, ProfileCatalog catalog)
      : kind_(std::move(kind)), catalog_(std::move(catalog)) {}

  std::string name() const override { return kind_; }
  const ProfileCatalog& catalog() const override { return catalog_; }
  ResourceGrant acquire(const ResourceRequest& request) override;
  void release(const ResourceGrant& grant) override;

 private:
  std::string kind_;
  ProfileCatalog catalog_;
};

class ProviderRegistry {
 public:
  // simulated (seeded), mock, and the four testbed stubs.
  static ProviderRegistry with_defaults(const ProfileCatalog& catalog, std::uint64_t seed);

  void add(std::unique_ptr<Provider> provider);
  bool contains(std::string_view name) const;
  Provider& get(std::string_view name) const;

  ResourceGrant acquire(const ResourceRequest& request, std::string_view provider) const;
  void release(const ResourceGrant& grant) const;

 private:
  std::map<std::string, std::unique_ptr<Provider>, std::less<>> providers_;
};

struct InstanceKey {
  std::string layer;
  std::string service;
  int index = 0;

  auto operator<=>(const InstanceKey&) const = default;
};

struct DeploymentPlan {
  std::vector<Host> hosts;  // service declaration order, then instance index
  LinkTable links;

  const Host& at(const InstanceKey& key) const;
  const Host* find(const InstanceKey& key) const;
  const Host* find_by_id(std::string_view id) const;
  std::vector<const Host*> select(const Selector& selector) const;
  std::vector<const Host*> layer_hosts(std::string_view layer) const;
};

// One request per (environment, profile) in first-appearance order.
std::vector<ResourceRequest> resource_requests(const LayersServicesConfig& cfg);

// First-fit: services in declaration order, hosts in grant order.
DeploymentPlan map_services(const LayersServicesConfig& cfg, const std::vector<ResourceGrant>& grants);

// Deterministic JSON rendering (hosts, profiles, links).
std::string plan_to_json(const DeploymentPlan& plan);

}  // namespace cb
