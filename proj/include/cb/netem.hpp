#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cb/units.hpp"

namespace cb {

struct NetworkConfig;
struct DeploymentPlan;
class EventLoop;
class Rng;

// Constraint on one directed host pair.
struct LinkModel {
  Seconds one_way_delay{0};
  double rate = std::numeric_limits<double>::infinity();  // bits/s
  double loss = 0;                                         // per-chunk, [0, 1)
  std::uint32_t mtu_chunk = 1500;                          // bytes

  // Throws ConfigError when an invariant is violated.
  static LinkModel make(Seconds one_way_delay, double rate, double loss,
                        std::uint32_t mtu_chunk = 1500);

  bool operator==(const LinkModel&) const = default;
};

// Expected transfer time: delay + size*8/rate * 1/(1-loss).
Seconds transfer_time(std::uint64_t size, const LinkModel& link);

class LinkTable {
 public:
  LinkTable() = default;
  explicit LinkTable(LinkModel fallback) : fallback_(fallback) {}

  // Falls back to the unconstrained model for pairs without a rule.
  const LinkModel& lookup(const std::string& src_host, const std::string& dst_host) const;
  void set(const std::string& src_host, const std::string& dst_host, const LinkModel& model);

  const LinkModel& fallback() const { return fallback_; }
  const std::map<std::pair<std::string, std::string>, LinkModel>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  LinkModel fallback_{};
  std::map<std::pair<std::string, std::string>, LinkModel> entries_;
};

LinkTable build_links(const NetworkConfig& net, const DeploymentPlan& plan);

// Event-driven store-and-forward transfer. Chunks of mtu_chunk bytes are
// serialised back to back; each attempt is lost independently with
// probability `loss` and resent immediately. The payload is delivered one
// propagation delay after the last successful chunk. Event times are derived
// from the cumulative number of bits put on the wire, so a lossless transfer
// lands at exactly delay + size*8/rate.
struct TransferOutcome {
  Seconds elapsed{0};
  std::uint64_t attempts = 0;
  std::uint64_t bytes_on_wire = 0;
};

void start_transfer(EventLoop& loop, std::uint64_t size, const LinkModel& link, Rng& rng,
                    std::function<void(const TransferOutcome&)> on_delivered);

// Runs a private event loop for one transfer.
TransferOutcome simulate_transfer(std::uint64_t size, const LinkModel& link, Rng& rng);

}  // namespace cb
