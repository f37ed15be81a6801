#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "cb/config.hpp"
#include "cb/pipeline.hpp"
#include "cb/provider.hpp"
#include "support.hpp"

using namespace cb;

namespace {

LayersServicesConfig two_layers(int edge_quantity) {
  LayersServicesConfig cfg;
  cfg.environments["iotlab"] = EnvironmentSpec{"simulated", "grenoble", "", {}};
  cfg.environments["g5k"] = EnvironmentSpec{"simulated", "lyon", "", {}};
  cfg.layers = {LayerSpec{"cloud", {ServiceSpec{"server", 1, "g5k", "dahu", {}}}},
                LayerSpec{"edge", {ServiceSpec{"client", edge_quantity, "iotlab", "rpi3", {}},
                                   ServiceSpec{"gateway", 1, "iotlab", "rpi3", {}}}}};
  return cfg;
}

std::vector<ResourceGrant> acquire_all(Provider& p, const LayersServicesConfig& cfg) {
  std::vector<ResourceGrant> grants;
  for (const auto& r : resource_requests(cfg)) grants.push_back(p.acquire(r));
  return grants;
}

}  // namespace

TEST(Catalog, DefaultsAndOverrides) {
  const auto cat = ProfileCatalog::defaults();
  for (const char* name : {"rpi3", "rpi4", "dahu", "skylake"}) EXPECT_TRUE(cat.contains(name)) << name;
  EXPECT_THROW(cat.at("cray"), Error);

  const auto extra = ProfileCatalog::parse("rpi3:\n  compress_rate: 2MB/s\n  cpu_cores: 2\nnano:\n  cpu_hz: 1.4GHz\n");
  EXPECT_EQ(extra.at("rpi3").cpu_cores, 2);
  EXPECT_DOUBLE_EQ(extra.at("rpi3").compress_rate, 2e6);
  EXPECT_EQ(extra.at("rpi3").inference_time, cat.at("rpi3").inference_time);  // inherited
  EXPECT_DOUBLE_EQ(extra.at("nano").cpu_hz, 1.4e9);

  auto merged = cat;
  merged.merge(extra);
  EXPECT_EQ(merged.at("rpi3").cpu_cores, 2);
  EXPECT_TRUE(merged.contains("nano"));

  EXPECT_THROW(ProfileCatalog::parse("rpi3:\n  turbo: yes\n"), ConfigError);
  EXPECT_THROW(ProfileCatalog::parse("rpi3:\n  cpu_cores: 0\n"), ConfigError);
  EXPECT_EQ(ProfileCatalog::parse(cat.serialize()).names(), cat.names());
  EXPECT_EQ(ProfileCatalog::parse(cat.serialize()).at("dahu"), cat.at("dahu"));
}

TEST(SimulatedProvider, DeterministicIdsFromSeed) {
  SimulatedProvider a(ProfileCatalog::defaults(), 9), b(ProfileCatalog::defaults(), 9);
  const auto cfg = two_layers(3);
  const auto ga = acquire_all(a, cfg), gb = acquire_all(b, cfg);
  ASSERT_EQ(ga.size(), gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    EXPECT_EQ(ga[i].grant_id, gb[i].grant_id);
    ASSERT_EQ(ga[i].hosts.size(), gb[i].hosts.size());
    for (std::size_t j = 0; j < ga[i].hosts.size(); ++j) {
      EXPECT_EQ(ga[i].hosts[j].id, gb[i].hosts[j].id);
      EXPECT_EQ(ga[i].hosts[j].address, gb[i].hosts[j].address);
    }
  }
}

TEST(SimulatedProvider, CapacityErrorReportsShortfall) {
  SimulatedProvider p(ProfileCatalog::defaults(), 1, {{"rpi3", 3}});
  try {
    p.acquire({"iotlab", "rpi3", 5, Seconds(60)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
    EXPECT_EQ(e.code(), "provider.capacity");
    EXPECT_NE(std::string(e.what()).find("short by 2"), std::string::npos) << e.what();
  }
  EXPECT_EQ(p.available("rpi3"), 3);
}

TEST(SimulatedProvider, ReleaseReturnsCapacityAndRejectsDoubleRelease) {
  SimulatedProvider p(ProfileCatalog::defaults(), 1, {{"rpi3", 4}});
  const auto g = p.acquire({"iotlab", "rpi3", 4, Seconds(60)});
  EXPECT_EQ(p.available("rpi3"), 0);
  EXPECT_THROW(p.acquire({"iotlab", "rpi3", 1, Seconds(60)}), Error);
  p.release(g);
  EXPECT_EQ(p.available("rpi3"), 4);
  try {
    p.release(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "provider.double_release");
  }
}

TEST(SimulatedProvider, PreconditionsChecked) {
  SimulatedProvider p(ProfileCatalog::defaults(), 1);
  EXPECT_THROW(p.acquire({"iotlab", "rpi3", 0, Seconds(60)}), Error);
  EXPECT_THROW(p.acquire({"iotlab", "cray", 1, Seconds(60)}), Error);
}

TEST(SimulatedProvider, ConcurrentAcquisitionNeverOversubscribes) {
  SimulatedProvider p(ProfileCatalog::defaults(), 1, {{"rpi3", 50}});
  std::atomic<int> granted{0}, refused{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i) {
        try {
          p.acquire({"iotlab", "rpi3", 1, Seconds(60)});
          ++granted;
        } catch (const Error&) {
          ++refused;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(granted.load(), 50);
  EXPECT_EQ(refused.load(), 110);
}

TEST(MockProvider, RecordsCalls) {
  MockProvider p(ProfileCatalog::defaults());
  const auto g = p.acquire({"x", "dahu", 200, Seconds(60)});
  EXPECT_EQ(g.hosts.size(), 200u);
  p.release(g);
  EXPECT_EQ(p.requests().size(), 1u);
  EXPECT_EQ(p.releases(), std::vector<std::string>{g.grant_id});
  EXPECT_THROW(p.release(g), Error);
}

TEST(TestbedProvider, NotConfigured) {
  auto reg = ProviderRegistry::with_defaults(ProfileCatalog::defaults(), 1);
  for (const char* kind : {"g5k", "iotlab", "chameleon", "chi-edge"}) {
    ASSERT_TRUE(reg.contains(kind)) << kind;
    try {
      reg.acquire({"x", "rpi3", 1, Seconds(60)}, kind);
      FAIL() << kind;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "provider.not_configured");
    }
  }
  EXPECT_THROW(reg.get("aws"), Error);
}

TEST(Mapping, FirstFitInDeclarationOrder) {
  SimulatedProvider p(ProfileCatalog::defaults(), 3);
  const auto cfg = two_layers(2);
  const auto reqs = resource_requests(cfg);
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_EQ(reqs[0].profile, "dahu");
  EXPECT_EQ(reqs[1].quantity, 3);  // client x2 + gateway share (iotlab, rpi3)
  const auto grants = acquire_all(p, cfg);
  const auto plan = map_services(cfg, grants);
  ASSERT_EQ(plan.hosts.size(), 4u);
  EXPECT_EQ(plan.hosts[0].logical_name(), "cloud.server.0");
  EXPECT_EQ(plan.hosts[1].logical_name(), "edge.client.0");
  EXPECT_EQ(plan.hosts[2].logical_name(), "edge.client.1");
  EXPECT_EQ(plan.hosts[3].logical_name(), "edge.gateway.0");
  EXPECT_EQ(plan.hosts[1].id, grants[1].hosts[0].id);
  EXPECT_EQ(plan.hosts[3].id, grants[1].hosts[2].id);
  EXPECT_EQ(plan.select(Selector::parse("edge")).size(), 3u);
  EXPECT_EQ(plan.select(Selector::parse("edge.client.1")).size(), 1u);
  EXPECT_EQ(plan_to_json(plan), plan_to_json(map_services(cfg, grants)));
}

TEST(Mapping, ShortfallAndMismatch) {
  const auto cfg = two_layers(2);
  SimulatedProvider p(ProfileCatalog::defaults(), 3);
  auto grants = acquire_all(p, cfg);
  grants[1].hosts.pop_back();
  try {
    map_services(cfg, grants);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "provider.shortfall");
  }
  grants.pop_back();
  try {
    map_services(cfg, grants);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "provider.profile_mismatch");
  }
}

TEST(Deploy, SavannaPlanHasLinks) {
  RunRequest req;
  req.dir = cbtest::savanna_dir();
  const auto d = deploy_experiment(req);
  ASSERT_EQ(d.plan.hosts.size(), 2u);
  EXPECT_EQ(d.prepared.seed, 42u);
  const auto& e = d.plan.at({"edge", "client", 0});
  const auto& c = d.plan.at({"cloud", "server", 0});
  EXPECT_DOUBLE_EQ(d.plan.links.lookup(e.id, c.id).rate, 15000.0);
  EXPECT_DOUBLE_EQ(d.plan.links.lookup(c.id, e.id).one_way_delay.count(), 0.075);
}

TEST(Deploy, TestbedProviderFailsCleanly) {
  RunRequest req;
  req.dir = cbtest::savanna_dir();
  req.provider = "g5k";
  try {
    deploy_experiment(req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
  }
}
