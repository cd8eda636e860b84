#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "focus/counters.hpp"
#include "focus/schema.hpp"
#include "focus/status.hpp"
#include "focus/types.hpp"

namespace focus {

enum class LocTag : std::uint8_t { kLog, kCache };

/// A cache slot. `gen` changes every time the slot is reused so a stale reference never matches.
struct CacheRef {
  std::uint32_t page = 0;  // 24 bits
  std::uint16_t slot = 0;
  std::uint8_t gen = 0;
  bool operator==(const CacheRef&) const = default;
};

struct Location {
  LocTag tag = LocTag::kLog;
  LogAddr log_addr = kNullAddr;
  CacheRef cache;

  static Location Log(LogAddr addr) { return {LocTag::kLog, addr, {}}; }
  static Location Cache(CacheRef ref) { return {LocTag::kCache, kNullAddr, ref}; }
  bool is_log() const { return tag == LocTag::kLog; }
  bool operator==(const Location& o) const {
    return tag == o.tag && (tag == LocTag::kLog ? log_addr == o.log_addr : cache == o.cache);
  }
};

struct IndexValue {
  Location loc;
  std::uint32_t chain_len = 0;  // deltas reachable from loc; 0 for cache locations
  bool operator==(const IndexValue&) const = default;
};

// Packed entry word. ~0 is a tombstone.
//   LOG:   bit63=0, chain_len in 48..55, address in 0..47
//   CACHE: bit63=1, gen in 40..47, page in 16..39, slot in 0..15
inline constexpr std::uint64_t kAbsentWord = ~std::uint64_t{0};
inline constexpr std::uint64_t kMaxIndexedAddr = (std::uint64_t{1} << 48) - 1;
inline constexpr std::uint32_t kMaxChainLen = 255;

std::uint64_t pack_index_value(const IndexValue& v);
IndexValue unpack_index_value(std::uint64_t word);

/// Ordered concurrent map HierKey -> IndexValue. Lock-free skip list; nodes live until the index is destroyed,
/// so an entry pointer obtained once stays usable (removal leaves a tombstone that insert can revive).
class GlobalIndex {
 public:
  class Entry {
   public:
    const std::string& encoded_key() const { return key_; }
    HierKey key() const;
    std::uint64_t load() const { return word_.load(std::memory_order_acquire); }
    std::optional<IndexValue> value() const;
    bool compare_exchange(std::uint64_t& expected, std::uint64_t desired) {
      return word_.compare_exchange_strong(expected, desired, std::memory_order_acq_rel, std::memory_order_acquire);
    }

   private:
    friend class GlobalIndex;
    explicit Entry(std::string key, std::uint64_t word) : key_(std::move(key)), word_(word) {}
    std::string key_;
    std::atomic<std::uint64_t> word_;
  };

  class Iterator {
   public:
    explicit Iterator(const GlobalIndex& index) : index_(index) {}
    void seek(const HierKey& start);
    bool valid() const { return node_ != nullptr; }
    void next();
    Entry* entry() const;

   private:
    void skip_dead();
    const GlobalIndex& index_;
    void* node_ = nullptr;
  };

  GlobalIndex();
  ~GlobalIndex();
  GlobalIndex(const GlobalIndex&) = delete;
  GlobalIndex& operator=(const GlobalIndex&) = delete;

  std::optional<IndexValue> get(const HierKey& key) const;
  /// Entry for the key even if tombstoned; nullptr if it was never inserted. Counts one probe.
  Entry* find(const HierKey& key) const;

  /// False if a live entry already exists.
  bool insert(const HierKey& key, const IndexValue& value);
  /// Returns the entry holding the key (existing or new) and whether this call installed `value`.
  std::pair<Entry*, bool> insert_entry(const HierKey& key, const IndexValue& value);
  bool remove(const HierKey& key);
  /// Tombstones `entry` if it still holds `expected`.
  bool remove_entry(Entry* entry, std::uint64_t expected);
  Result<bool> cas_update(const HierKey& key, const IndexValue& expected, const IndexValue& desired);

  /// Up to `limit` live entries with key >= start, ascending.
  std::vector<std::pair<HierKey, IndexValue>> range_iter(const HierKey& start, std::size_t limit) const;

  std::size_t size() const { return live_.load(std::memory_order_relaxed); }
  std::uint64_t probes() const { return probes_.load(); }

 private:
  struct Node;
  static constexpr int kMaxHeight = 20;

  Node* new_node(std::string key, std::uint64_t word, int height);
  int random_height();
  Node* find_ge(std::string_view key, Node** prev) const;

  Node* head_;
  std::atomic<int> max_height_{1};
  std::atomic<Node*> allocations_{nullptr};
  std::atomic<std::int64_t> live_{0};
  mutable ShardedCounter probes_;
};

}  // namespace focus
