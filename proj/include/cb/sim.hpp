#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <string_view>
#include <vector>

#include "cb/units.hpp"

namespace cb {

// Single-threaded discrete-event loop over a virtual clock. Events at equal
// times fire in scheduling order.
class EventLoop {
 public:
  using Action = std::function<void()>;

  Seconds now() const { return now_; }

  void schedule_at(Seconds when, Action action);
  void schedule_after(Seconds delay, Action action) { schedule_at(now_ + delay, std::move(action)); }

  // Fires the earliest event; false when the queue is empty.
  bool step();
  void run();
  // Moves the clock forward without firing anything; never backwards.
  void advance_to(Seconds when);

  bool empty() const { return queue_.empty(); }
  std::uint64_t processed() const { return processed_; }

 private:
  struct Event {
    Seconds when;
    std::uint64_t seq;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.when != b.when ? a.when > b.when : a.seq > b.seq;
    }
  };

  Seconds now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
};

// Reproducible pseudo-random stream. Raw draws come from mt19937_64, whose
// output sequence is fixed by the standard; conversions to doubles are done
// here rather than by <random> distributions so results are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent child seed for a named stream.
  static std::uint64_t derive(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0,
                              std::uint64_t b = 0);

  std::uint64_t next() { return engine_(); }
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // [lo, hi]
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cb
