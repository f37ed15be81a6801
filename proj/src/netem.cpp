#include "cb/netem.hpp"

#include <cmath>
#include <memory>

#include "cb/config.hpp"
#include "cb/provider.hpp"
#include "cb/sim.hpp"

namespace cb {

LinkModel LinkModel::make(Seconds one_way_delay, double rate, double loss, std::uint32_t mtu_chunk) {
  if (!(rate > 0)) throw ConfigError("config.rate", "link", "rate must be > 0");
  if (!(one_way_delay.count() >= 0)) throw ConfigError("config.delay", "link", "delay must be >= 0");
  if (!(loss >= 0 && loss < 1)) throw ConfigError("config.loss", "link", "loss must be in [0, 1)");
  if (mtu_chunk == 0) throw ConfigError("config.mtu", "link", "mtu_chunk must be > 0");
  return LinkModel{one_way_delay, rate, loss, mtu_chunk};
}

Seconds transfer_time(std::uint64_t size, const LinkModel& link) {
  if (size == 0) return link.one_way_delay;
  const double bits = static_cast<double>(size) * 8.0;
  const double expected_transmissions = 1.0 / (1.0 - link.loss);
  return link.one_way_delay + Seconds(bits / link.rate * expected_transmissions);
}

const LinkModel& LinkTable::lookup(const std::string& src_host, const std::string& dst_host) const {
  auto it = entries_.find({src_host, dst_host});
  return it != entries_.end() ? it->second : fallback_;
}

void LinkTable::set(const std::string& src_host, const std::string& dst_host, const LinkModel& model) {
  entries_.insert_or_assign({src_host, dst_host}, model);
}

LinkTable build_links(const NetworkConfig& net, const DeploymentPlan& plan) {
  LinkTable table;
  for (const auto& rule : expand_symmetric(net).rules) {
    const auto model = LinkModel::make(rule.delay / 2.0, rule.rate, rule.loss);
    for (const auto* src : plan.layer_hosts(rule.src)) {
      for (const auto* dst : plan.layer_hosts(rule.dst)) {
        if (src->id != dst->id) table.set(src->id, dst->id, model);
      }
    }
  }
  return table;
}

namespace {

struct TransferState {
  std::uint64_t remaining = 0;
  std::uint64_t bits_on_wire = 0;
  std::uint64_t attempts = 0;
  Seconds start{0};
  LinkModel link;
  Rng* rng = nullptr;
  std::function<void(const TransferOutcome&)> done;
};

void deliver(EventLoop& loop, const std::shared_ptr<TransferState>& st) {
  loop.schedule_after(st->link.one_way_delay, [&loop, st] {
    st->done(TransferOutcome{loop.now() - st->start, st->attempts, st->bits_on_wire / 8});
  });
}

void send_chunk(EventLoop& loop, const std::shared_ptr<TransferState>& st) {
  const std::uint64_t chunk = std::min<std::uint64_t>(st->remaining, st->link.mtu_chunk);
  st->bits_on_wire += chunk * 8;
  ++st->attempts;
  const Seconds sent_at = st->start + Seconds(static_cast<double>(st->bits_on_wire) / st->link.rate);
  loop.schedule_at(sent_at, [&loop, st, chunk] {
    const bool lost = st->link.loss > 0 && st->rng->bernoulli(st->link.loss);
    if (!lost) st->remaining -= chunk;
    if (st->remaining == 0) {
      deliver(loop, st);
    } else {
      send_chunk(loop, st);
    }
  });
}

}  // namespace

void start_transfer(EventLoop& loop, std::uint64_t size, const LinkModel& link, Rng& rng,
                    std::function<void(const TransferOutcome&)> on_delivered) {
  auto st = std::make_shared<TransferState>();
  st->remaining = size;
  st->start = loop.now();
  st->link = link;
  st->rng = &rng;
  st->done = std::move(on_delivered);
  if (size == 0) {
    deliver(loop, st);
  } else {
    send_chunk(loop, st);
  }
}

TransferOutcome simulate_transfer(std::uint64_t size, const LinkModel& link, Rng& rng) {
  EventLoop loop;
  TransferOutcome out;
  start_transfer(loop, size, link, rng, [&](const TransferOutcome& o) { out = o; });
  loop.run();
  return out;
}

}  // namespace cb
