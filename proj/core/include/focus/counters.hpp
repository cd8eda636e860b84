#pragma once

#include <array>
#include <atomic>
#include <cstdint>

namespace focus {

/// Small dense id for the calling thread, stable for its lifetime.
std::size_t thread_slot();

/// Monotone counter striped across cache lines so hot paths on many threads do not contend.
class ShardedCounter {
 public:
  static constexpr std::size_t kShards = 64;

  void add(std::uint64_t n = 1) { shards_[thread_slot() % kShards].v.fetch_add(n, std::memory_order_relaxed); }

  std::uint64_t load() const {
    std::uint64_t sum = 0;
    for (const auto& s : shards_) sum += s.v.load(std::memory_order_relaxed);
    return sum;
  }

  void reset() {
    for (auto& s : shards_) s.v.store(0, std::memory_order_relaxed);
  }

 private:
  struct alignas(64) Shard {
    std::atomic<std::uint64_t> v{0};
  };
  std::array<Shard, kShards> shards_{};
};

}  // namespace focus
