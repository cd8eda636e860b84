#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "focus/pmem_backend.hpp"
#include "focus/record_codec.hpp"
#include "focus/schema.hpp"
#include "focus/status.hpp"

namespace focus {

struct PlogOptions {
  std::uint32_t clog_extent = 1u << 20;
  std::uint32_t dlog_extent = 256u << 10;
  std::uint32_t schema_region_size = 64u << 10;
  /// A sealed chunk is a GC candidate when live/capacity drops below this ...
  double gc_live_ratio = 0.25;
  /// ... and the fraction of chunks in use exceeds this.
  double gc_region_utilization = 0.80;
};

enum class ExtentKind { kCLog, kDLog };

/// Where a log address falls.
struct AddrInfo {
  std::uint32_t chunk_id = 0;
  ExtentKind kind = ExtentKind::kCLog;
};

struct ChunkInfo {
  std::uint32_t chunk_id = 0;
  LogAddr clog_base = 0;
  std::uint64_t clog_capacity = 0;
  std::uint64_t clog_cursor = 0;
  LogAddr dlog_base = 0;
  std::uint64_t dlog_capacity = 0;
  std::uint64_t dlog_cursor = 0;
  std::int64_t live_bytes = 0;
  bool in_use = false;
  bool open = false;
  std::uint32_t prev = 0;
  std::uint32_t next = 0;
  std::uint64_t alloc_seq = 0;
};

/// One row met while scanning an extent.
struct ScannedRow {
  LogAddr addr = 0;
  ExtentKind kind = ExtentKind::kCLog;
  std::size_t size = 0;
  // complete rows
  std::optional<HierKey> key;
  bool invalid = false;
  // delta rows
  std::optional<DeltaHeader> delta;
  SchemaId schema_id = 0;
};

/// Key state rebuilt by a recovery scan.
struct RecoveredKey {
  HierKey key;
  LogAddr head = kNullAddr;
  LogAddr tail = kNullAddr;
  std::uint32_t chain_len = 0;
};

/// Moves one live complete row out of a chunk being collected.
class Relocator {
 public:
  virtual ~Relocator() = default;
  /// Called for every valid complete row in the chunk; returns bytes re-appended elsewhere (0 if the row was dead).
  virtual Result<std::size_t> relocate(LogAddr head, const HierKey& key) = 0;
  /// Returns once no reader can still hold an address inside the chunk.
  virtual void quiesce() = 0;
};

/// Two-layer persistent log: chunked CLog of complete rows, each chunk with its own DLog of delta rows.
///
/// Layout: [superblock "FOCS" + chunk table][schema region][chunk 0: CLog | DLog][chunk 1] ...
class Plog {
 public:
  static constexpr char kMagic[4] = {'F', 'O', 'C', 'S'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kRowAlign = 8;
  static constexpr std::uint32_t kNoChunk = 0xFFFFFFFFu;

  /// Formats a fresh log when the region has no superblock; otherwise loads schemas and rebuilds state.
  static Result<std::unique_ptr<Plog>> open(PmemBackend& backend, SchemaRegistry& registry, PlogOptions options = {});

  ~Plog();
  Plog(const Plog&) = delete;
  Plog& operator=(const Plog&) = delete;

  PmemBackend& backend() { return backend_; }
  const SchemaRegistry& registry() const { return registry_; }
  const PlogOptions& options() const { return options_; }

  /// Appends, flushes and fences a complete row; out-of-line pointers are rebased to the final address.
  Result<LogAddr> append_complete(CompleteRowImage image);
  /// Appends into the DLog of the chunk that owns the delta's chain pointer. kDLogFull when it has no room.
  Result<LogAddr> append_delta(DeltaRowImage image);

  Result<RowImage> read_row(LogAddr addr) const;
  Result<RowImage> read_row(LogAddr addr, const SchemaDef& schema) const;

  Result<CompleteHeader> read_complete_header(LogAddr addr) const;
  Result<DeltaHeader> read_delta_header(LogAddr addr) const;
  /// Schema of the chain a row belongs to, following chain pointers down to the complete row.
  Result<SchemaId> schema_of(LogAddr addr) const;

  /// Sets the invalid flag of a complete row (idempotent) and persists it.
  Status mark_invalid(LogAddr addr);
  /// Redirects an unpublished delta to a new predecessor and persists the pointer.
  Status rewrite_chain_pointer(LogAddr delta_addr, const DeltaHeader& header, LogAddr new_prev);

  /// Relocates live rows through `relocator`, then recycles both extents. Returns bytes reclaimed.
  Result<std::uint64_t> gc_chunk(std::uint32_t chunk_id, Relocator& relocator);
  std::vector<std::uint32_t> gc_candidates() const;

  Result<AddrInfo> locate(LogAddr addr) const;
  bool gc_active(std::uint32_t chunk_id) const;

  /// Visits every row in a chunk's extents in address order.
  Status scan_chunk(std::uint32_t chunk_id, const std::function<void(const ScannedRow&)>& visit) const;

  /// Chains rebuilt by the scan performed in open(); empty for a freshly formatted log.
  const std::vector<RecoveredKey>& recovered() const { return recovered_; }
  void clear_recovered() { recovered_.clear(); recovered_.shrink_to_fit(); }

  std::uint32_t chunk_count() const { return static_cast<std::uint32_t>(chunks_.size()); }
  ChunkInfo chunk_info(std::uint32_t chunk_id) const;
  std::uint32_t open_chunk() const { return open_chunk_.load(std::memory_order_acquire); }
  double region_utilization() const;
  /// Closes the current open chunk so the next complete append lands in a fresh one.
  Status seal_open_chunk();

 private:
  struct Chunk;

  Plog(PmemBackend& backend, SchemaRegistry& registry, PlogOptions options);

  Status format();
  Status load();
  Status persist_schema_record(const std::string& record);
  Status persist_chunk_entry(const Chunk& c);
  Result<std::uint32_t> allocate_chunk_locked();
  Status rotate_from(std::uint32_t full_chunk);
  Status recycle(Chunk& c);
  Status scan_extents(Chunk& c, bool rebuild);
  Status rebuild_chains(const std::vector<ScannedRow>& rows);

  Result<SchemaId> schema_of_impl(LogAddr addr, int depth, const Chunk* bound) const;
  const Chunk* chunk_for(LogAddr addr) const;

  PmemBackend& backend_;
  SchemaRegistry& registry_;
  PlogOptions options_;

  std::uint64_t chunk_size_ = 0;
  LogAddr schema_region_ = 0;
  LogAddr chunks_base_ = 0;

  std::vector<std::unique_ptr<Chunk>> chunks_;
  std::atomic<std::uint32_t> open_chunk_{kNoChunk};
  std::atomic<std::uint32_t> chunks_in_use_{0};
  std::mutex alloc_mu_;
  std::uint64_t next_alloc_seq_ = 1;
  std::uint32_t schema_used_ = 0;
  std::vector<RecoveredKey> recovered_;
};

}  // namespace focus
