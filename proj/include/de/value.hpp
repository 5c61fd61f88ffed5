#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "json.hpp"

namespace de {

// Product values are restricted to a JSON value model: scalars, records, and
// lists of records of scalars. The default (sorted-key) json type keeps every
// serialization byte-stable, which the archive format relies on.
using Value = nlohmann::json;

// Generation ordinal of a channel's DataBlock lineage. Gap-free from 0.
using Generation = std::uint64_t;

// Milliseconds on the engine clock. The clock is either wall time or the
// simulated facility clock; all timestamps in products, archives and metrics
// come from the same clock so simulated runs are reproducible.
using TimeMs = std::int64_t;

std::string format_iso8601(TimeMs ms);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimeMs now_ms() const = 0;
};

class WallClock final : public Clock {
 public:
  TimeMs now_ms() const override;
};

// Manually advanced clock used by the co-simulation driver and tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimeMs start = 0) : now_(start) {}

  TimeMs now_ms() const override { return now_.load(std::memory_order_relaxed); }
  void set_ms(TimeMs t) { now_.store(t, std::memory_order_relaxed); }
  void advance_ms(TimeMs dt) { now_.fetch_add(dt, std::memory_order_relaxed); }

 private:
  std::atomic<TimeMs> now_;
};

}  // namespace de
