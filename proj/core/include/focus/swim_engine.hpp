#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "focus/epoch.hpp"
#include "focus/global_index.hpp"
#include "focus/plog.hpp"
#include "focus/record_codec.hpp"
#include "focus/schema.hpp"

namespace focus {

struct SwimOptions {
  /// A partial update that would take the chain past this many deltas rewrites the full row instead.
  std::uint32_t restore_threshold = 5;
  /// Run merges and GC on a background thread. When off, callers drive them (drain_merges, run_gc).
  bool background = true;
  std::size_t merge_queue_depth = 4096;
  std::size_t merge_batch = 64;
  /// Keys are queued for merge once their chain holds this many deltas.
  std::uint32_t merge_min_chain = 1;
  std::chrono::milliseconds worker_interval{2};
};

/// One in-place write: absolute destination and length.
struct MergeItem {
  LogAddr addr = 0;
  std::size_t size = 0;
};

enum class MergeOutcome { kMerged, kDeferred, kRewritten };

struct ChainView {
  LogAddr tail_addr = kNullAddr;
  LogAddr head_addr = kNullAddr;
  std::vector<RowImage> rows;  // tail first, complete row last
};

struct ReadTrace {
  std::uint32_t rows_visited = 0;
  bool from_cache = false;
  // Index state the read was served from.
  GlobalIndex::Entry* entry = nullptr;
  std::uint64_t word = kAbsentWord;
};

/// A full row as held by the cache, with the durable chain it mirrors.
struct CachedRow {
  FieldValues values;
  LogAddr plog_tail = kNullAddr;
  std::uint32_t chain_len = 0;
};

/// What the engine needs from the cache when an index word points at a cache slot.
class CacheView {
 public:
  virtual ~CacheView() = default;
  /// Consistent copy of the row behind `word`; nullopt once that slot no longer backs the word.
  virtual Result<std::optional<CachedRow>> read_cached(GlobalIndex::Entry* entry, std::uint64_t word,
                                                       const SchemaDef& schema) = 0;
  /// The index moved from `cache_word` to `new_word`. `absorb` holds the fields written by a partial update,
  /// null when the slot should just be dropped.
  virtual void detached(GlobalIndex::Entry* entry, std::uint64_t cache_word, std::uint64_t new_word,
                        const FieldUpdates* absorb) = 0;
};

struct SwimStats {
  std::uint64_t full_puts = 0;
  std::uint64_t partial_updates = 0;
  std::uint64_t restore_rewrites = 0;
  std::uint64_t merges = 0;
  std::uint64_t merges_deferred = 0;
  std::uint64_t merges_rewritten = 0;
  std::uint64_t cas_retries = 0;
  std::uint64_t relocated_rows = 0;
  std::uint64_t gc_runs = 0;
  std::uint64_t gc_reclaimed_bytes = 0;
};

class SwimEngine : private Relocator {
 public:
  SwimEngine(Plog& log, GlobalIndex& index, const SchemaRegistry& registry, SwimOptions options = {});
  ~SwimEngine() override;
  SwimEngine(const SwimEngine&) = delete;
  SwimEngine& operator=(const SwimEngine&) = delete;

  void set_cache(CacheView* cache) { cache_ = cache; }
  /// Latch that in-place merges of this key hold.
  std::unique_lock<std::mutex> latch(const GlobalIndex::Entry& entry) {
    return std::unique_lock(key_latch_[stripe_of(entry.encoded_key())]);
  }
  /// Joins the background worker; later merges and GC run only when called explicitly.
  void stop_background();
  const SwimOptions& options() const { return options_; }

  /// Inserts every chain recovered by the log scan into the index.
  Status rebuild_index();

  Status put_full(const HierKey& key, const FieldValues& values);
  Status update_partial(const HierKey& key, FieldUpdates updates);
  /// Values for every field of the schema.
  Result<FieldValues> read_full(const HierKey& key, ReadTrace* trace = nullptr);
  /// Values for `fields` (sorted, unique), in that order.
  Result<FieldValues> read_partial(const HierKey& key, const FieldIdSet& fields, ReadTrace* trace = nullptr);
  /// Same as read_partial but starting from an index entry already in hand (scans).
  Result<FieldValues> read_entry(GlobalIndex::Entry* entry, const SchemaDef& schema, const FieldIdSet& fields,
                                 ReadTrace* trace = nullptr);
  /// Removes the key if present.
  Status del(const HierKey& key);

  /// Flushes every cacheline touched by the sorted list exactly once, then fences. Returns flushes issued.
  Result<std::size_t> cacheline_flush(const std::vector<MergeItem>& mlist);
  Result<MergeOutcome> merge_chain(const HierKey& key);
  Status restore_rewrite(const HierKey& key);
  Result<ChainView> chain_view(const HierKey& key);

  /// Full row as stored in the log starting at `tail`, bypassing the index. Used by cache admission.
  Result<FieldValues> read_log_row(const SchemaDef& schema, LogAddr tail);

  /// Processes queued merge requests on the calling thread; returns how many were attempted.
  std::size_t drain_merges();
  /// Collects every current GC candidate. Returns bytes reclaimed.
  Result<std::uint64_t> run_gc();
  Result<std::uint64_t> gc_chunk(std::uint32_t chunk_id);

  EpochManager& epochs() { return epochs_; }
  SwimStats stats() const;

 private:
  static constexpr std::size_t kStripes = 1024;

  struct Tail {
    LogAddr addr = kNullAddr;
    std::uint32_t chain_len = 0;
    std::optional<CachedRow> cached;
  };

  // Relocator
  Result<std::size_t> relocate(LogAddr head, const HierKey& key) override;
  void quiesce() override { epochs_.quiesce(); }

  const SchemaDef* schema_for(const HierKey& key, Status* err) const;
  /// Resolves the chain tail behind `word`; nullopt when a cache slot moved on (caller reloads).
  Result<std::optional<Tail>> resolve(GlobalIndex::Entry* entry, std::uint64_t word, const SchemaDef& schema);
  Result<FieldValues> read_chain(const SchemaDef& schema, LogAddr tail, const FieldIdSet* fields, ReadTrace* trace);
  Result<LogAddr> head_of(LogAddr tail);
  Status invalidate_chain(LogAddr tail);
  void after_swap(GlobalIndex::Entry* entry, std::uint64_t old_word, std::uint64_t new_word,
                  const FieldUpdates* absorb);
  Status rewrite_entry(GlobalIndex::Entry* entry, const SchemaDef& schema, const FieldUpdates* extra,
                       std::optional<std::uint64_t> expected_word, bool* swapped);
  Result<MergeOutcome> merge_entry(GlobalIndex::Entry* entry);
  void enqueue_merge(GlobalIndex::Entry* entry);
  void worker_loop();

  std::size_t stripe_of(const std::string& encoded_key) const { return std::hash<std::string>{}(encoded_key) % kStripes; }
  std::uint64_t seq_begin(std::size_t stripe) const;
  bool seq_validate(std::size_t stripe, std::uint64_t seq) const;

  Plog& log_;
  PmemBackend& backend_;
  GlobalIndex& index_;
  const SchemaRegistry& registry_;
  SwimOptions options_;
  CacheView* cache_ = nullptr;
  EpochManager epochs_;

  struct alignas(64) SeqCell {
    std::atomic<std::uint64_t> seq{0};
  };
  std::array<SeqCell, kStripes> merge_seq_{};
  std::array<std::mutex, kStripes> key_latch_{};

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<GlobalIndex::Entry*> merge_queue_;
  bool stop_ = false;
  std::thread worker_;
  std::mutex gc_mu_;

  ShardedCounter full_puts_, partial_updates_, restore_rewrites_, merges_, merges_deferred_, merges_rewritten_,
      cas_retries_, relocated_rows_, gc_runs_, gc_reclaimed_;
};

}  // namespace focus
