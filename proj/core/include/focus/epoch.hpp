#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <thread>

#include "focus/counters.hpp"

namespace focus {

/// Two-epoch reclamation barrier. Operations hold a Guard while they may dereference log addresses;
/// quiesce() returns once every guard taken before the call has been released.
class EpochManager {
 public:
  class Guard {
   public:
    explicit Guard(EpochManager& m) {
      const std::size_t stripe = thread_slot() % kStripes;
      for (;;) {
        const std::uint64_t e = m.epoch_.load(std::memory_order_seq_cst);
        cell_ = &m.active_[e & 1][stripe].n;
        cell_->fetch_add(1, std::memory_order_seq_cst);
        if (m.epoch_.load(std::memory_order_seq_cst) == e) break;
        cell_->fetch_sub(1, std::memory_order_release);
      }
    }
    ~Guard() { cell_->fetch_sub(1, std::memory_order_release); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    std::atomic<std::int64_t>* cell_ = nullptr;
  };

  void quiesce() {
    std::lock_guard lock(mu_);
    const std::uint64_t e = epoch_.fetch_add(1, std::memory_order_seq_cst);
    auto& old = active_[e & 1];
    for (;;) {
      std::int64_t sum = 0;
      for (const auto& c : old) sum += c.n.load(std::memory_order_acquire);
      if (sum == 0) return;
      std::this_thread::yield();
    }
  }

 private:
  static constexpr std::size_t kStripes = 64;
  struct alignas(64) Cell {
    std::atomic<std::int64_t> n{0};
  };
  std::atomic<std::uint64_t> epoch_{0};
  std::array<std::array<Cell, kStripes>, 2> active_{};
  std::mutex mu_;
};

}  // namespace focus
