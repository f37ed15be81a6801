#include "cb/sim.hpp"

#include <cmath>
#include <stdexcept>

namespace cb {

void EventLoop::schedule_at(Seconds when, Action action) {
  if (when < now_) throw std::logic_error("EventLoop: event scheduled in the past");
  queue_.push(Event{when, next_seq_++, std::move(action)});
}

bool EventLoop::step() {
  if (queue_.empty()) return false;
  // priority_queue::top is const; the action is moved out via a copy of the node.
  Event ev = queue_.top();
  queue_.pop();
  now_ = ev.when;
  ++processed_;
  ev.action();
  return true;
}

void EventLoop::run() {
  while (step()) {
  }
}

void EventLoop::advance_to(Seconds when) {
  if (when > now_) now_ = when;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view stream, std::uint64_t a,
                          std::uint64_t b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t x = splitmix64(seed ^ splitmix64(h));
  x = splitmix64(x ^ splitmix64(a + 0x632be59bd9b4e019ULL));
  return splitmix64(x ^ splitmix64(b + 0x8cb92ba72f3d8dd7ULL));
}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  // Rejection sampling avoids modulo bias.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % span;
  std::uint64_t r = 0;
  do {
    r = engine_();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

}  // namespace cb
