#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "focus/clock.hpp"
#include "focus/global_index.hpp"
#include "focus/schema.hpp"
#include "focus/swim_engine.hpp"
#include "focus/task_queue.hpp"

namespace focus {

/// Retention window by hit-ratio band.
struct RetentionTable {
  double low_below = 0.3;   // H < low_below
  double high_from = 0.7;   // H >= high_from
  double low_ms = 2000;
  double mid_ms = 8000;
  double high_ms = 2000;

  double window_ms(double hit_ratio) const {
    if (hit_ratio < low_below) return low_ms;
    if (hit_ratio < high_from) return mid_ms;
    return high_ms;
  }
};

struct SeaCacheOptions {
  std::uint64_t capacity_bytes = 500ull << 20;
  std::uint32_t page_size = 16u << 10;
  double hit_threshold = 0.5;
  double page_usage_target = 0.8;
  double ema_alpha = 0.05;
  std::uint32_t var_quota = 256;
  std::size_t task_queue_len = 1u << 16;
  RetentionTable rw_table;
  /// Sweeps per eviction pass before giving up.
  std::uint32_t max_evict_rounds = 16;
  std::uint64_t seed = 0x5eaca;
  /// Consume tasks on a background thread; otherwise the owner calls pump().
  bool background = true;
  std::chrono::microseconds worker_idle{200};
};

/// Per-schema statistics driving admission and eviction.
struct SchemaStats {
  double hit_ratio = 0.0;       // H
  double row_occupancy = 0.0;   // RO
  std::uint32_t fail_count = 0; // N
  double retention_ms = 0.0;    // RW
};

/// Lifetime in milliseconds: 2^-N * H * (1 - RO) * RW.
double lifetime_ms(const SchemaStats& stats);

/// Admission decision outside warm-up: certain above the threshold, else with probability H / threshold.
bool should_admit(double hit_ratio, double hit_threshold, std::mt19937_64& rng);

struct SeaCacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t probes = 0;
  std::uint64_t admitted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t evicted = 0;
  std::uint64_t orphans_reclaimed = 0;
  std::uint64_t absorbed = 0;
  std::uint64_t refresh_dropped = 0;
  std::uint64_t tasks_dropped = 0;
  std::uint64_t checksum_failures = 0;
  std::uint64_t used_bytes = 0;
  std::uint64_t pages = 0;
  double usage = 0.0;
};

/// One sweep of an eviction pass, for inspection.
struct SweepRecord {
  std::uint32_t round = 0;
  std::uint64_t evicted = 0;
  std::uint32_t fail_count = 0;  // N in force during the sweep
  double usage_after = 0.0;
};

/// Row cache keyed through the global index: an index word either names a log chain or a cache slot.
/// Every mutation of pages and slots happens on one consumer (worker thread or pump()).
class SeaCache final : public CacheView {
 public:
  using RowLoader = std::function<Result<FieldValues>(const SchemaDef&, LogAddr tail)>;
  // Held across load and publish during admission so an in-place merge cannot slip in between.
  using AdmitGuard = std::function<std::unique_lock<std::mutex>(const GlobalIndex::Entry&)>;

  SeaCache(GlobalIndex& index, const SchemaRegistry& registry, RowLoader loader, SeaCacheOptions options = {},
           const Clock* clock = nullptr);
  ~SeaCache() override;
  SeaCache(const SeaCache&) = delete;
  SeaCache& operator=(const SeaCache&) = delete;

  const SeaCacheOptions& options() const { return options_; }
  void set_admit_guard(AdmitGuard guard) { admit_guard_ = std::move(guard); }

  // Foreground hooks
  /// Records a hit on a cached word and queues an access refresh.
  void on_hit(SchemaId schema, std::uint64_t cache_word);
  /// Records a miss and, if admission says so, queues the row for caching.
  void on_miss(SchemaId schema, GlobalIndex::Entry* entry, std::uint64_t observed_word);

  // CacheView
  Result<std::optional<CachedRow>> read_cached(GlobalIndex::Entry* entry, std::uint64_t word,
                                               const SchemaDef& schema) override;
  void detached(GlobalIndex::Entry* entry, std::uint64_t cache_word, std::uint64_t new_word,
                const FieldUpdates* absorb) override;

  // Consumer side
  /// Runs queued tasks on the calling thread (manual mode). Returns tasks processed.
  std::size_t pump(std::size_t max_tasks = SIZE_MAX);
  /// Waits until the queue is empty and the worker is idle.
  void drain();
  /// Evicts stale rows, lowest-hit-ratio schema first, until usage <= target. Consumer side only.
  std::uint64_t evict_pass(double target_usage);
  const std::vector<SweepRecord>& last_pass() const { return last_pass_; }

  /// Directly admits the row behind `observed_word` (consumer side). kPoolExhausted when no slot is free.
  Status admit(GlobalIndex::Entry* entry, std::uint64_t observed_word, const SchemaDef& schema);

  SchemaStats schema_stats(SchemaId id) const;
  void set_hit_ratio(SchemaId id, double h);
  void set_fail_count(SchemaId id, std::uint32_t n);
  bool warming_up() const { return warm_.load(std::memory_order_acquire); }
  void end_warm_up() { warm_.store(false, std::memory_order_release); }
  double usage() const;
  SeaCacheStats stats() const;
  void reset_counters();

  /// Test hook: flips one bit of the payload of the slot behind `cache_word`.
  void corrupt_for_test(std::uint64_t cache_word, std::size_t payload_offset);
  /// Pages of a schema, each as (used slots, bitmap popcount) for consistency checks.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> page_occupancy(SchemaId id) const;

 private:
  struct Task {
    enum Kind : std::uint8_t { kNone, kRefresh, kAdmit, kAbsorb, kRelease } kind = kNone;
    SchemaId schema = 0;
    GlobalIndex::Entry* entry = nullptr;
    std::uint64_t word = 0;      // cache word (refresh/absorb/release) or observed log word (admit)
    std::uint64_t new_word = 0;  // absorb: log word the update installed
    FieldUpdates updates;
  };
  struct Page;
  struct SchemaState;

  SchemaState& state(SchemaId id) const;
  void record_access(SchemaId id, bool hit);
  bool enqueue(Task task);
  void run_task(Task& task);
  void refresh(const Task& task);
  void absorb(Task& task);
  void release(const Task& task);

  struct Slot {
    Page* page = nullptr;
    std::uint16_t index = 0;
    char* bytes = nullptr;
  };
  std::optional<Slot> slot_for(std::uint64_t cache_word) const;
  Result<Slot> allocate_slot(SchemaState& st, const SchemaDef& schema);
  void free_slot(Page& page, std::uint16_t slot);
  Status encode_row(char* slot, const SchemaDef& schema, const FieldValues& values) const;
  Result<FieldValues> decode_row(const char* slot, const SchemaDef& schema) const;
  std::uint32_t slot_size(const SchemaDef& schema) const;
  /// True when the slot is occupied and the index no longer points at it.
  bool orphaned(const Page& page, std::uint16_t slot) const;
  void worker_loop();

  GlobalIndex& index_;
  const SchemaRegistry& registry_;
  RowLoader loader_;
  AdmitGuard admit_guard_;
  SeaCacheOptions options_;
  SteadyClock steady_;
  const Clock* clock_;

  std::uint32_t max_pages_ = 0;
  std::unique_ptr<std::atomic<Page*>[]> pages_;
  std::vector<std::unique_ptr<Page>> owned_pages_;  // consumer side
  std::atomic<std::uint32_t> page_count_{0};
  std::unique_ptr<std::atomic<SchemaState*>[]> states_;
  mutable std::mutex states_mu_;
  mutable std::vector<std::unique_ptr<SchemaState>> owned_states_;

  BoundedQueue<Task> queue_;
  std::mutex consume_mu_;
  std::atomic<std::uint64_t> used_bytes_{0};
  std::atomic<bool> warm_{true};
  std::mt19937_64 consumer_rng_;
  std::vector<SweepRecord> last_pass_;

  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> in_flight_{0};
  std::thread worker_;

  ShardedCounter hits_, misses_, probes_, refresh_dropped_, tasks_dropped_, checksum_failures_;
  std::atomic<std::uint64_t> admitted_{0}, rejected_{0}, evicted_{0}, orphans_{0}, absorbed_{0};
};

}  // namespace focus
