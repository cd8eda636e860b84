#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace focus {

/// Monotonic time source in microseconds.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::uint64_t now_us() const = 0;
};

class SteadyClock final : public Clock {
 public:
  std::uint64_t now_us() const override {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now().time_since_epoch())
            .count());
  }
};

/// Scripted time for tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::uint64_t start_us = 0) : now_(start_us) {}
  std::uint64_t now_us() const override { return now_.load(std::memory_order_acquire); }
  void set_us(std::uint64_t t) { now_.store(t, std::memory_order_release); }
  void advance_us(std::uint64_t d) { now_.fetch_add(d, std::memory_order_acq_rel); }
  void advance_ms(double ms) { advance_us(static_cast<std::uint64_t>(ms * 1000.0)); }

 private:
  std::atomic<std::uint64_t> now_;
};

}  // namespace focus
