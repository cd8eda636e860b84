#include "focus/pmem_backend.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>

namespace focus {

std::size_t thread_slot() {
  static std::atomic<std::size_t> next{0};
  thread_local const std::size_t slot = next.fetch_add(1, std::memory_order_relaxed);
  return slot;
}

IoTally& thread_io_tally() {
  thread_local IoTally tally;
  return tally;
}

Result<std::unique_ptr<PmemBackend>> PmemBackend::open(const PmemOptions& options) {
  if (options.capacity == 0 || options.capacity % kCacheLineSize != 0) {
    return Status(ErrorCode::kInvalidArgument, "capacity must be a positive multiple of 64");
  }
  std::unique_ptr<PmemBackend> b(new PmemBackend());
  b->capacity_ = options.capacity;
  b->track_ = options.track_durability;
  void* mem = MAP_FAILED;
  if (options.path.empty()) {
    mem = ::mmap(nullptr, options.capacity, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
  } else {
    b->fd_ = ::open(options.path.c_str(), O_RDWR | O_CREAT, 0644);
    if (b->fd_ < 0) return Status(ErrorCode::kIOError, options.path + ": " + std::strerror(errno));
    if (::ftruncate(b->fd_, static_cast<off_t>(options.capacity)) != 0) {
      return Status(ErrorCode::kIOError, std::string("ftruncate: ") + std::strerror(errno));
    }
    mem = ::mmap(nullptr, options.capacity, PROT_READ | PROT_WRITE, MAP_SHARED, b->fd_, 0);
  }
  if (mem == MAP_FAILED) return Status(ErrorCode::kIOError, std::string("mmap: ") + std::strerror(errno));
  b->base_ = static_cast<char*>(mem);
  if (b->track_) {
    b->durable_.assign(b->base_, options.capacity);
    b->lines_.assign(options.capacity / kCacheLineSize, LineState::kClean);
  }
  return b;
}

Result<std::unique_ptr<PmemBackend>> PmemBackend::from_image(std::string_view image, bool track_durability) {
  PmemOptions opts;
  opts.capacity = image.size();
  opts.track_durability = false;
  auto b = open(opts);
  if (!b.ok()) return b.status();
  std::memcpy((*b)->base_, image.data(), image.size());
  if (track_durability) {
    (*b)->track_ = true;
    (*b)->durable_.assign(image);
    (*b)->lines_.assign(image.size() / kCacheLineSize, LineState::kClean);
  }
  return b;
}

PmemBackend::~PmemBackend() {
  if (base_ != nullptr) ::munmap(base_, capacity_);
  if (fd_ >= 0) ::close(fd_);
}

void PmemBackend::note_event_locked() {
  const std::uint64_t n = events_.fetch_add(1, std::memory_order_relaxed) + 1;
  if (crash_at_ != 0 && n == crash_at_ && !crash_captured_) {
    crash_image_ = durable_;
    crash_captured_ = true;
  }
}

void PmemBackend::mark_written_locked(LogAddr addr, std::size_t len) {
  if (len == 0) return;
  for (std::uint64_t line = addr / kCacheLineSize; line <= (addr + len - 1) / kCacheLineSize; ++line) {
    lines_[line] = LineState::kDirty;
  }
}

Status PmemBackend::write_at(LogAddr addr, std::string_view bytes) {
  if (addr > capacity_ || bytes.size() > capacity_ - addr) {
    return Status(ErrorCode::kOutOfRange, "write [" + std::to_string(addr) + ", +" + std::to_string(bytes.size()) + ")");
  }
  bytes_written_.add(bytes.size());
  thread_io_tally().bytes_written += bytes.size();
  if (!track_) {
    std::memcpy(base_ + addr, bytes.data(), bytes.size());
    return Status::OK();
  }
  std::lock_guard lock(track_mu_);
  std::memcpy(base_ + addr, bytes.data(), bytes.size());
  mark_written_locked(addr, bytes.size());
  note_event_locked();
  return Status::OK();
}

Status PmemBackend::read_at(LogAddr addr, std::size_t len, char* out) const {
  if (addr > capacity_ || len > capacity_ - addr) {
    return Status(ErrorCode::kOutOfRange, "read [" + std::to_string(addr) + ", +" + std::to_string(len) + ")");
  }
  bytes_read_.add(len);
  if (len > 0) reads_rounded_.add(align_up(addr + len, kNvmBlockSize) - align_down(addr, kNvmBlockSize));
  thread_io_tally().bytes_read += len;
  if (!track_) {
    std::memcpy(out, base_ + addr, len);
    return Status::OK();
  }
  std::lock_guard lock(track_mu_);
  std::memcpy(out, base_ + addr, len);
  return Status::OK();
}

Result<std::string> PmemBackend::read(LogAddr addr, std::size_t len) const {
  std::string out(len, '\0');
  FOCUS_RETURN_IF_ERROR(read_at(addr, len, out.data()));
  return out;
}

Result<std::uint16_t> PmemBackend::fetch_or_u16(LogAddr addr, std::uint16_t bits) {
  if (addr % 2 != 0 || addr + 2 > capacity_) return Status(ErrorCode::kOutOfRange, "fetch_or_u16");
  bytes_written_.add(2);
  thread_io_tally().bytes_written += 2;
  auto* word = reinterpret_cast<std::uint16_t*>(base_ + addr);
  if (!track_) return std::atomic_ref<std::uint16_t>(*word).fetch_or(bits, std::memory_order_acq_rel);
  std::lock_guard lock(track_mu_);
  const std::uint16_t prior = std::atomic_ref<std::uint16_t>(*word).fetch_or(bits, std::memory_order_acq_rel);
  mark_written_locked(addr, 2);
  note_event_locked();
  return prior;
}

Status PmemBackend::flush(LogAddr line_addr) {
  if (line_addr % kCacheLineSize != 0) return Status(ErrorCode::kUnalignedFlush, std::to_string(line_addr));
  if (line_addr >= capacity_) return Status(ErrorCode::kOutOfRange, "flush beyond capacity");
  flushes_.add();
  if (!track_) return Status::OK();
  std::lock_guard lock(track_mu_);
  const std::uint64_t line = line_addr / kCacheLineSize;
  if (lines_[line] == LineState::kDirty) {
    lines_[line] = LineState::kPending;
    pending_.push_back(line);
  }
  note_event_locked();
  return Status::OK();
}

void PmemBackend::fence() {
  fences_.add();
  if (!track_) {
    std::atomic_thread_fence(std::memory_order_seq_cst);
    return;
  }
  std::lock_guard lock(track_mu_);
  for (std::uint64_t line : pending_) {
    // A write after the flush re-dirtied the line; it stays volatile.
    if (lines_[line] != LineState::kPending) continue;
    std::memcpy(durable_.data() + line * kCacheLineSize, base_ + line * kCacheLineSize, kCacheLineSize);
    lines_[line] = LineState::kClean;
  }
  pending_.clear();
  note_event_locked();
}

Status PmemBackend::flush_range(LogAddr addr, std::size_t len) {
  if (len == 0) return Status::OK();
  for (LogAddr line = align_down(addr, kCacheLineSize); line < addr + len; line += kCacheLineSize) {
    FOCUS_RETURN_IF_ERROR(flush(line));
  }
  return Status::OK();
}

Status PmemBackend::persist(LogAddr addr, std::string_view bytes) {
  FOCUS_RETURN_IF_ERROR(write_at(addr, bytes));
  FOCUS_RETURN_IF_ERROR(flush_range(addr, bytes.size()));
  fence();
  return Status::OK();
}

FlushStats PmemBackend::stats() const {
  return {flushes_.load(), fences_.load(), bytes_written_.load(), bytes_read_.load(), reads_rounded_.load()};
}

std::string PmemBackend::simulate_crash() const {
  if (!track_) return std::string(base_, capacity_);
  std::lock_guard lock(track_mu_);
  return durable_;
}

void PmemBackend::arm_crash_after(std::uint64_t events) {
  std::lock_guard lock(track_mu_);
  crash_at_ = events_.load(std::memory_order_relaxed) + events;
  crash_captured_ = false;
  crash_image_.clear();
}

bool PmemBackend::crash_captured() const {
  std::lock_guard lock(track_mu_);
  return crash_captured_;
}

std::string PmemBackend::take_crash_image() {
  std::lock_guard lock(track_mu_);
  crash_at_ = 0;
  crash_captured_ = false;
  return std::move(crash_image_);
}

}  // namespace focus
