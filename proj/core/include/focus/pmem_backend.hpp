#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "focus/counters.hpp"
#include "focus/status.hpp"
#include "focus/types.hpp"

namespace focus {

struct FlushStats {
  std::uint64_t cacheline_flushes = 0;
  std::uint64_t fences = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t reads_256b_rounded = 0;

  FlushStats operator-(const FlushStats& o) const {
    return {cacheline_flushes - o.cacheline_flushes, fences - o.fences, bytes_written - o.bytes_written,
            bytes_read - o.bytes_read, reads_256b_rounded - o.reads_256b_rounded};
  }
};

/// Per-thread byte tally, used to attribute backend traffic to the operation that caused it.
struct IoTally {
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
};
IoTally& thread_io_tally();

struct PmemOptions {
  std::string path;  // empty: anonymous memory
  std::uint64_t capacity = 64ull << 20;
  /// Keep a durable twin so simulate_crash() can reconstruct post-failure contents.
  bool track_durability = false;
};

/// Byte-addressable region with explicit cacheline flush and fence, emulating persistent memory.
///
/// A write is visible immediately but only becomes durable once every 64-byte line it touched
/// has been flushed and a fence has followed. simulate_crash() returns the durable image.
class PmemBackend {
 public:
  static Result<std::unique_ptr<PmemBackend>> open(const PmemOptions& options);
  /// A backend whose live and durable contents both equal `image` (e.g. a recovered crash image).
  static Result<std::unique_ptr<PmemBackend>> from_image(std::string_view image, bool track_durability);

  ~PmemBackend();
  PmemBackend(const PmemBackend&) = delete;
  PmemBackend& operator=(const PmemBackend&) = delete;

  std::uint64_t capacity() const { return capacity_; }
  bool tracks_durability() const { return track_; }

  Status write_at(LogAddr addr, std::string_view bytes);
  Status read_at(LogAddr addr, std::size_t len, char* out) const;
  Result<std::string> read(LogAddr addr, std::size_t len) const;

  /// Atomically ORs `bits` into the 16-bit word at `addr` (2-byte aligned); returns the prior value.
  Result<std::uint16_t> fetch_or_u16(LogAddr addr, std::uint16_t bits);

  Status flush(LogAddr line_addr);
  void fence();
  /// Flushes every line overlapping [addr, addr+len), one flush per line.
  Status flush_range(LogAddr addr, std::size_t len);
  Status persist(LogAddr addr, std::string_view bytes);

  FlushStats stats() const;

  /// Durable image: every line not flushed-and-fenced since its last write holds its previous durable content.
  std::string simulate_crash() const;

  /// Captures simulate_crash() right after the `events`-th write/flush/fence from now. Requires tracking.
  void arm_crash_after(std::uint64_t events);
  bool crash_captured() const;
  std::string take_crash_image();
  std::uint64_t persistence_events() const { return events_.load(std::memory_order_relaxed); }

 private:
  PmemBackend() = default;

  enum class LineState : std::uint8_t { kClean, kDirty, kPending };

  void mark_written_locked(LogAddr addr, std::size_t len);
  void note_event_locked();

  char* base_ = nullptr;
  std::uint64_t capacity_ = 0;
  int fd_ = -1;
  bool track_ = false;

  ShardedCounter flushes_;
  ShardedCounter fences_;
  ShardedCounter bytes_written_;
  mutable ShardedCounter bytes_read_;
  mutable ShardedCounter reads_rounded_;

  mutable std::mutex track_mu_;
  std::string durable_;
  std::vector<LineState> lines_;
  std::vector<std::uint64_t> pending_;
  std::atomic<std::uint64_t> events_{0};
  std::uint64_t crash_at_ = 0;  // 0: disarmed
  bool crash_captured_ = false;
  std::string crash_image_;
};

}  // namespace focus
