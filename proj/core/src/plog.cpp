#include "focus/plog.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace focus {

namespace {

constexpr std::size_t kSuperHeaderSize = 64;
constexpr std::size_t kChunkEntrySize = 24;
constexpr std::size_t kSchemaHeaderSize = 8;
constexpr int kMaxChainDepth = 256;

}  // namespace

struct Plog::Chunk {
  std::uint32_t id = 0;
  LogAddr clog_base = 0;
  LogAddr dlog_base = 0;
  std::atomic<std::uint64_t> clog_cursor{0};
  std::atomic<std::uint64_t> dlog_cursor{0};
  std::atomic<std::int64_t> live_bytes{0};
  std::atomic<bool> in_use{false};
  std::atomic<bool> gc{false};
  std::uint32_t prev = kNoChunk;
  std::uint32_t next = kNoChunk;
  std::uint64_t alloc_seq = 0;
};

Plog::Plog(PmemBackend& backend, SchemaRegistry& registry, PlogOptions options)
    : backend_(backend), registry_(registry), options_(options) {}

Plog::~Plog() { registry_.set_persist_hook(nullptr); }

Result<std::unique_ptr<Plog>> Plog::open(PmemBackend& backend, SchemaRegistry& registry, PlogOptions options) {
  if (options.clog_extent % kCacheLineSize != 0 || options.dlog_extent % kCacheLineSize != 0 ||
      options.clog_extent == 0 || options.dlog_extent == 0) {
    return Status(ErrorCode::kInvalidArgument, "extent sizes must be non-zero multiples of 64");
  }
  std::unique_ptr<Plog> log(new Plog(backend, registry, options));
  auto magic = backend.read(0, 4);
  if (!magic.ok()) return magic.status();
  if (std::memcmp(magic->data(), kMagic, 4) == 0) {
    FOCUS_RETURN_IF_ERROR(log->load());
  } else {
    FOCUS_RETURN_IF_ERROR(log->format());
  }
  Plog* raw = log.get();
  registry.set_persist_hook([raw](const std::string& rec) { return raw->persist_schema_record(rec); });
  return log;
}

Status Plog::format() {
  chunk_size_ = std::uint64_t{options_.clog_extent} + options_.dlog_extent;
  const std::uint64_t cap = backend_.capacity();
  std::uint64_t n = cap / chunk_size_;
  auto base_for = [&](std::uint64_t chunks) {
    return align_up(kSuperHeaderSize + kChunkEntrySize * chunks, 4096) + align_up(options_.schema_region_size, 4096);
  };
  while (n > 0 && base_for(n) + n * chunk_size_ > cap) --n;
  if (n == 0) return Status(ErrorCode::kCapacityExhausted, "region too small for one chunk");
  schema_region_ = align_up(kSuperHeaderSize + kChunkEntrySize * n, 4096);
  chunks_base_ = base_for(n);

  std::string hdr(kSuperHeaderSize, '\0');
  std::memcpy(hdr.data(), kMagic, 4);
  store_le<std::uint32_t>(hdr.data() + 4, kVersion);
  store_le<std::uint32_t>(hdr.data() + 8, static_cast<std::uint32_t>(n));
  store_le<std::uint32_t>(hdr.data() + 12, options_.clog_extent);
  store_le<std::uint32_t>(hdr.data() + 16, options_.dlog_extent);
  store_le<std::uint32_t>(hdr.data() + 20, options_.schema_region_size);
  store_le<std::uint64_t>(hdr.data() + 32, schema_region_);
  store_le<std::uint64_t>(hdr.data() + 40, chunks_base_);

  // Table and schema header first; the magic makes the log valid only once they are durable.
  FOCUS_RETURN_IF_ERROR(backend_.persist(kSuperHeaderSize, std::string(kChunkEntrySize * n, '\0')));
  FOCUS_RETURN_IF_ERROR(backend_.persist(schema_region_, std::string(kSchemaHeaderSize, '\0')));
  FOCUS_RETURN_IF_ERROR(backend_.persist(0, hdr));

  chunks_.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto c = std::make_unique<Chunk>();
    c->id = i;
    c->clog_base = chunks_base_ + i * chunk_size_;
    c->dlog_base = c->clog_base + options_.clog_extent;
    chunks_.push_back(std::move(c));
  }
  std::lock_guard lock(alloc_mu_);
  auto first = allocate_chunk_locked();
  if (!first.ok()) return first.status();
  open_chunk_.store(*first, std::memory_order_release);
  return Status::OK();
}

Status Plog::load() {
  auto hdr = backend_.read(0, kSuperHeaderSize);
  if (!hdr.ok()) return hdr.status();
  if (load_le<std::uint32_t>(hdr->data() + 4) != kVersion) return Status(ErrorCode::kCorruptHeader, "log version");
  const auto n = load_le<std::uint32_t>(hdr->data() + 8);
  options_.clog_extent = load_le<std::uint32_t>(hdr->data() + 12);
  options_.dlog_extent = load_le<std::uint32_t>(hdr->data() + 16);
  options_.schema_region_size = load_le<std::uint32_t>(hdr->data() + 20);
  schema_region_ = load_le<std::uint64_t>(hdr->data() + 32);
  chunks_base_ = load_le<std::uint64_t>(hdr->data() + 40);
  chunk_size_ = std::uint64_t{options_.clog_extent} + options_.dlog_extent;
  if (chunks_base_ + n * chunk_size_ > backend_.capacity()) return Status(ErrorCode::kCorruptHeader, "geometry");

  // Schemas.
  auto sh = backend_.read(schema_region_, kSchemaHeaderSize);
  if (!sh.ok()) return sh.status();
  const auto count = load_le<std::uint32_t>(sh->data());
  schema_used_ = load_le<std::uint32_t>(sh->data() + 4);
  if (schema_used_ > options_.schema_region_size - kSchemaHeaderSize) return Status(ErrorCode::kCorruptHeader, "schemas");
  auto recs = backend_.read(schema_region_ + kSchemaHeaderSize, schema_used_);
  if (!recs.ok()) return recs.status();
  std::string_view in = *recs;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto s = decode_schema_record(in);
    if (!s.ok()) return s.status();
    FOCUS_RETURN_IF_ERROR(registry_.restore(std::move(s).value()));
  }

  // Chunk table.
  auto table = backend_.read(kSuperHeaderSize, kChunkEntrySize * n);
  if (!table.ok()) return table.status();
  chunks_.reserve(n);
  std::uint32_t newest = kNoChunk;
  std::uint64_t newest_seq = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const char* e = table->data() + i * kChunkEntrySize;
    auto c = std::make_unique<Chunk>();
    c->id = i;
    c->clog_base = chunks_base_ + i * chunk_size_;
    c->dlog_base = c->clog_base + options_.clog_extent;
    c->in_use.store(load_le<std::uint32_t>(e) == 1, std::memory_order_relaxed);
    c->prev = load_le<std::uint32_t>(e + 4);
    c->next = load_le<std::uint32_t>(e + 8);
    c->alloc_seq = load_le<std::uint64_t>(e + 16);
    if (c->in_use.load(std::memory_order_relaxed)) {
      chunks_in_use_.fetch_add(1, std::memory_order_relaxed);
      next_alloc_seq_ = std::max(next_alloc_seq_, c->alloc_seq + 1);
      if (c->alloc_seq >= newest_seq) {
        newest_seq = c->alloc_seq;
        newest = i;
      }
    }
    chunks_.push_back(std::move(c));
  }

  std::vector<ScannedRow> rows;
  for (auto& c : chunks_) {
    if (!c->in_use.load(std::memory_order_relaxed)) continue;
    FOCUS_RETURN_IF_ERROR(scan_extents(*c, /*rebuild=*/true));
    FOCUS_RETURN_IF_ERROR(scan_chunk(c->id, [&](const ScannedRow& r) { rows.push_back(r); }));
  }
  FOCUS_RETURN_IF_ERROR(rebuild_chains(rows));

  if (newest == kNoChunk) {
    std::lock_guard lock(alloc_mu_);
    auto first = allocate_chunk_locked();
    if (!first.ok()) return first.status();
    newest = *first;
  }
  open_chunk_.store(newest, std::memory_order_release);
  return Status::OK();
}

Status Plog::persist_schema_record(const std::string& record) {
  if (kSchemaHeaderSize + schema_used_ + record.size() > options_.schema_region_size) {
    return Status(ErrorCode::kCapacityExhausted, "schema region full");
  }
  FOCUS_RETURN_IF_ERROR(backend_.persist(schema_region_ + kSchemaHeaderSize + schema_used_, record));
  auto sh = backend_.read(schema_region_, 4);
  if (!sh.ok()) return sh.status();
  const std::uint32_t count = load_le<std::uint32_t>(sh->data()) + 1;
  schema_used_ += static_cast<std::uint32_t>(record.size());
  std::string hdr(kSchemaHeaderSize, '\0');
  store_le<std::uint32_t>(hdr.data(), count);
  store_le<std::uint32_t>(hdr.data() + 4, schema_used_);
  return backend_.persist(schema_region_, hdr);
}

Status Plog::persist_chunk_entry(const Chunk& c) {
  std::string e(kChunkEntrySize, '\0');
  store_le<std::uint32_t>(e.data(), c.in_use.load(std::memory_order_relaxed) ? 1 : 0);
  store_le<std::uint32_t>(e.data() + 4, c.prev);
  store_le<std::uint32_t>(e.data() + 8, c.next);
  store_le<std::uint64_t>(e.data() + 16, c.alloc_seq);
  return backend_.persist(kSuperHeaderSize + c.id * kChunkEntrySize, e);
}

Result<std::uint32_t> Plog::allocate_chunk_locked() {
  for (auto& c : chunks_) {
    if (c->in_use.load(std::memory_order_acquire)) continue;
    const std::uint32_t prev = open_chunk_.load(std::memory_order_acquire);
    c->prev = prev;
    c->next = kNoChunk;
    c->alloc_seq = next_alloc_seq_++;
    c->clog_cursor.store(0, std::memory_order_relaxed);
    c->dlog_cursor.store(0, std::memory_order_relaxed);
    c->live_bytes.store(0, std::memory_order_relaxed);
    c->in_use.store(true, std::memory_order_release);
    FOCUS_RETURN_IF_ERROR(persist_chunk_entry(*c));
    if (prev != kNoChunk && chunks_[prev]->in_use.load(std::memory_order_acquire)) {
      chunks_[prev]->next = c->id;
      FOCUS_RETURN_IF_ERROR(persist_chunk_entry(*chunks_[prev]));
    }
    chunks_in_use_.fetch_add(1, std::memory_order_relaxed);
    return c->id;
  }
  return Status(ErrorCode::kCapacityExhausted, "no free chunk");
}

Status Plog::rotate_from(std::uint32_t full_chunk) {
  std::lock_guard lock(alloc_mu_);
  if (open_chunk_.load(std::memory_order_acquire) != full_chunk) return Status::OK();
  auto id = allocate_chunk_locked();
  if (!id.ok()) return id.status();
  open_chunk_.store(*id, std::memory_order_release);
  return Status::OK();
}

Status Plog::seal_open_chunk() { return rotate_from(open_chunk_.load(std::memory_order_acquire)); }

const Plog::Chunk* Plog::chunk_for(LogAddr addr) const {
  if (addr == kNullAddr || addr < chunks_base_) return nullptr;
  const std::uint64_t idx = (addr - chunks_base_) / chunk_size_;
  if (idx >= chunks_.size()) return nullptr;
  return chunks_[idx].get();
}

Result<AddrInfo> Plog::locate(LogAddr addr) const {
  const Chunk* c = chunk_for(addr);
  if (c == nullptr || !c->in_use.load(std::memory_order_acquire)) {
    return Status(ErrorCode::kBadAddress, std::to_string(addr));
  }
  AddrInfo info;
  info.chunk_id = c->id;
  info.kind = addr < c->dlog_base ? ExtentKind::kCLog : ExtentKind::kDLog;
  return info;
}

bool Plog::gc_active(std::uint32_t chunk_id) const {
  return chunk_id < chunks_.size() && chunks_[chunk_id]->gc.load(std::memory_order_acquire);
}

Result<LogAddr> Plog::append_complete(CompleteRowImage image) {
  auto key = complete_row_key(image.bytes);
  if (!key.ok()) return key.status();
  const SchemaDef* schema = registry_.get(key->schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(key->schema_id));
  const std::uint64_t padded = align_up(image.bytes.size(), kRowAlign);
  if (padded > options_.clog_extent) return Status(ErrorCode::kCapacityExhausted, "row larger than a CLog extent");

  Chunk* c = nullptr;
  std::uint64_t off = 0;
  for (;;) {
    const std::uint32_t id = open_chunk_.load(std::memory_order_acquire);
    c = chunks_[id].get();
    off = c->clog_cursor.load(std::memory_order_relaxed);
    if (off + padded > options_.clog_extent) {
      FOCUS_RETURN_IF_ERROR(rotate_from(id));
      continue;
    }
    if (c->clog_cursor.compare_exchange_weak(off, off + padded, std::memory_order_acq_rel)) break;
  }
  const LogAddr addr = c->clog_base + off;
  if (schema->has_variable_fields()) FOCUS_RETURN_IF_ERROR(rebase_complete(image, *schema, addr));
  FOCUS_RETURN_IF_ERROR(backend_.persist(addr, image.bytes));
  c->live_bytes.fetch_add(static_cast<std::int64_t>(image.bytes.size()), std::memory_order_relaxed);
  return addr;
}

Result<LogAddr> Plog::append_delta(DeltaRowImage image) {
  auto hdr = parse_delta_header(image.bytes);
  if (!hdr.ok()) return hdr.status();
  auto sid = schema_of(hdr->chain_pointer);
  if (!sid.ok()) return sid.status();
  const SchemaDef* schema = registry_.get(*sid);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema);
  const Chunk* owner = chunk_for(hdr->chain_pointer);
  if (owner == nullptr || !owner->in_use.load(std::memory_order_acquire)) return Status(ErrorCode::kBadAddress);
  Chunk* c = chunks_[owner->id].get();

  const std::uint64_t padded = align_up(image.bytes.size(), kRowAlign);
  std::uint64_t off = c->dlog_cursor.load(std::memory_order_relaxed);
  do {
    if (off + padded > options_.dlog_extent) return Status(ErrorCode::kDLogFull, "chunk " + std::to_string(c->id));
  } while (!c->dlog_cursor.compare_exchange_weak(off, off + padded, std::memory_order_acq_rel));
  const LogAddr addr = c->dlog_base + off;
  if (schema->has_variable_fields()) FOCUS_RETURN_IF_ERROR(rebase_delta(image, *schema, addr));
  FOCUS_RETURN_IF_ERROR(backend_.persist(addr, image.bytes));
  return addr;
}

Result<CompleteHeader> Plog::read_complete_header(LogAddr addr) const {
  char buf[kCompleteHeaderSize];
  FOCUS_RETURN_IF_ERROR(backend_.read_at(addr, sizeof(buf), buf));
  return parse_complete_header(std::string_view(buf, sizeof(buf)));
}

Result<DeltaHeader> Plog::read_delta_header(LogAddr addr) const {
  char first[4];
  FOCUS_RETURN_IF_ERROR(backend_.read_at(addr, 4, first));
  const auto count = load_le<std::uint16_t>(first + 2);
  if (count == 0) return Status(ErrorCode::kCorruptHeader, "empty delta");
  auto meta = backend_.read(addr, delta_meta_size(count));
  if (!meta.ok()) return meta.status();
  return parse_delta_header(*meta);
}

Result<SchemaId> Plog::schema_of(LogAddr addr) const { return schema_of_impl(addr, 0, nullptr); }

Result<SchemaId> Plog::schema_of_impl(LogAddr addr, int depth, const Chunk* bound) const {
  if (depth > kMaxChainDepth) return Status(ErrorCode::kCorruptHeader, "chain too deep");
  const Chunk* c = chunk_for(addr);
  if (c == nullptr || !c->in_use.load(std::memory_order_acquire)) return Status(ErrorCode::kBadAddress);
  if (bound != nullptr && c != bound) return Status(ErrorCode::kBadAddress, "chain leaves its chunk");
  if (addr < c->dlog_base) {
    if (addr + kCompleteHeaderSize > c->dlog_base) return Status(ErrorCode::kBadAddress);
    auto h = read_complete_header(addr);
    if (!h.ok()) return h.status();
    if (h->kv_size == 0 || addr + h->row_size() > c->dlog_base) return Status(ErrorCode::kBadAddress, "no row");
    auto key = backend_.read(addr + kCompleteHeaderSize, h->key_len);
    if (!key.ok()) return key.status();
    auto k = HierKey::decode(*key);
    if (!k.ok()) return k.status();
    return k->schema_id;
  }
  if (addr + 4 > c->dlog_base + options_.dlog_extent) return Status(ErrorCode::kBadAddress);
  auto h = read_delta_header(addr);
  if (!h.ok()) return h.status();
  return schema_of_impl(h->chain_pointer, depth + 1, c);
}

Result<RowImage> Plog::read_row(LogAddr addr) const {
  auto sid = schema_of(addr);
  if (!sid.ok()) return sid.status();
  const SchemaDef* schema = registry_.get(*sid);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema);
  return read_row(addr, *schema);
}

Result<RowImage> Plog::read_row(LogAddr addr, const SchemaDef& schema) const {
  const Chunk* c = chunk_for(addr);
  if (c == nullptr || !c->in_use.load(std::memory_order_acquire)) return Status(ErrorCode::kBadAddress);
  if (addr < c->dlog_base) {
    if (addr - c->clog_base >= c->clog_cursor.load(std::memory_order_acquire)) return Status(ErrorCode::kBadAddress);
    auto h = read_complete_header(addr);
    if (!h.ok()) return h.status();
    if (h->kv_size == 0) return Status(ErrorCode::kBadAddress, "no row");
    auto bytes = backend_.read(addr, h->row_size());
    if (!bytes.ok()) return bytes.status();
    return RowImage(CompleteRowImage{addr, std::move(bytes).value()});
  }
  if (addr - c->dlog_base >= c->dlog_cursor.load(std::memory_order_acquire)) return Status(ErrorCode::kBadAddress);
  auto h = read_delta_header(addr);
  if (!h.ok()) return h.status();
  const RowReader reader = [this, addr](std::size_t off, std::size_t len) { return backend_.read(addr + off, len); };
  auto size = delta_row_size(schema, *h, reader);
  if (!size.ok()) return size.status();
  auto bytes = backend_.read(addr, *size);
  if (!bytes.ok()) return bytes.status();
  return RowImage(DeltaRowImage{addr, std::move(bytes).value()});
}

Status Plog::mark_invalid(LogAddr addr) {
  auto info = locate(addr);
  if (!info.ok()) return info.status();
  Chunk& c = *chunks_[info->chunk_id];
  if (info->kind != ExtentKind::kCLog || addr - c.clog_base >= c.clog_cursor.load(std::memory_order_acquire)) {
    return Status(ErrorCode::kBadAddress, "not a complete row");
  }
  auto h = read_complete_header(addr);
  if (!h.ok()) return h.status();
  if (h->kv_size == 0) return Status(ErrorCode::kBadAddress, "no row");
  auto prior = backend_.fetch_or_u16(addr, kInvalidBit);
  if (!prior.ok()) return prior.status();
  if ((*prior & kInvalidBit) != 0) return Status::OK();
  c.live_bytes.fetch_sub(static_cast<std::int64_t>(h->row_size()), std::memory_order_relaxed);
  FOCUS_RETURN_IF_ERROR(backend_.flush(align_down(addr, kCacheLineSize)));
  backend_.fence();
  return Status::OK();
}

Status Plog::rewrite_chain_pointer(LogAddr delta_addr, const DeltaHeader& header, LogAddr new_prev) {
  std::string ptr(8, '\0');
  store_le<std::uint64_t>(ptr.data(), new_prev);
  return backend_.persist(delta_addr + header.chain_pointer_offset(), ptr);
}

Status Plog::scan_extents(Chunk& c, bool /*rebuild*/) {
  // CLog: rows end at the first zero header word or the first row that does not parse.
  std::uint64_t off = 0;
  std::int64_t live = 0;
  while (off + kCompleteHeaderSize <= options_.clog_extent) {
    const LogAddr addr = c.clog_base + off;
    auto h = read_complete_header(addr);
    if (!h.ok() || h->kv_size == 0) break;
    if (off + h->row_size() > options_.clog_extent) break;
    auto key = backend_.read(addr + kCompleteHeaderSize, h->key_len);
    if (!key.ok()) break;
    auto k = HierKey::decode(*key);
    if (!k.ok()) break;
    const SchemaDef* schema = registry_.get(k->schema_id);
    if (schema == nullptr || h->kv_size < schema->fixed_region_size) break;
    if (!h->invalid) live += static_cast<std::int64_t>(h->row_size());
    off = align_up(off + h->row_size(), kRowAlign);
  }
  c.clog_cursor.store(off, std::memory_order_release);
  c.live_bytes.store(live, std::memory_order_relaxed);

  off = 0;
  while (off + 4 <= options_.dlog_extent) {
    const LogAddr addr = c.dlog_base + off;
    auto h = read_delta_header(addr);
    if (!h.ok()) break;
    auto sid = schema_of_impl(h->chain_pointer, 0, &c);
    if (!sid.ok()) break;
    const SchemaDef* schema = registry_.get(*sid);
    if (schema == nullptr) break;
    const RowReader reader = [this, addr](std::size_t o, std::size_t len) { return backend_.read(addr + o, len); };
    auto size = delta_row_size(*schema, *h, reader);
    if (!size.ok() || off + *size > options_.dlog_extent) break;
    off = align_up(off + *size, kRowAlign);
  }
  c.dlog_cursor.store(off, std::memory_order_release);
  return Status::OK();
}

Status Plog::scan_chunk(std::uint32_t chunk_id, const std::function<void(const ScannedRow&)>& visit) const {
  if (chunk_id >= chunks_.size()) return Status(ErrorCode::kBadAddress, "chunk id");
  const Chunk& c = *chunks_[chunk_id];
  if (!c.in_use.load(std::memory_order_acquire)) return Status::OK();
  const std::uint64_t clog_end = c.clog_cursor.load(std::memory_order_acquire);
  for (std::uint64_t off = 0; off < clog_end;) {
    const LogAddr addr = c.clog_base + off;
    auto h = read_complete_header(addr);
    if (!h.ok()) return h.status();
    if (h->kv_size == 0) break;  // reserved but not yet written
    ScannedRow row;
    row.addr = addr;
    row.kind = ExtentKind::kCLog;
    row.size = h->row_size();
    row.invalid = h->invalid;
    auto key = backend_.read(addr + kCompleteHeaderSize, h->key_len);
    if (!key.ok()) return key.status();
    auto k = HierKey::decode(*key);
    if (!k.ok()) return k.status();
    row.schema_id = k->schema_id;
    row.key = std::move(k).value();
    visit(row);
    off = align_up(off + row.size, kRowAlign);
  }
  const std::uint64_t dlog_end = c.dlog_cursor.load(std::memory_order_acquire);
  for (std::uint64_t off = 0; off < dlog_end;) {
    const LogAddr addr = c.dlog_base + off;
    auto h = read_delta_header(addr);
    if (!h.ok()) break;
    auto sid = schema_of_impl(h->chain_pointer, 0, &c);
    if (!sid.ok()) break;
    const SchemaDef* schema = registry_.get(*sid);
    if (schema == nullptr) break;
    const RowReader reader = [this, addr](std::size_t o, std::size_t len) { return backend_.read(addr + o, len); };
    auto size = delta_row_size(*schema, *h, reader);
    if (!size.ok()) return size.status();
    ScannedRow row;
    row.addr = addr;
    row.kind = ExtentKind::kDLog;
    row.size = *size;
    row.schema_id = *sid;
    row.delta = std::move(h).value();
    visit(row);
    off = align_up(off + row.size, kRowAlign);
  }
  return Status::OK();
}

Status Plog::rebuild_chains(const std::vector<ScannedRow>& rows) {
  struct Head {
    const ScannedRow* row;
    std::uint64_t seq;
  };
  std::vector<Head> heads;
  std::unordered_map<LogAddr, std::vector<const ScannedRow*>> children;
  for (const auto& r : rows) {
    if (r.kind == ExtentKind::kCLog) {
      if (!r.invalid) heads.push_back({&r, chunks_[chunk_for(r.addr)->id]->alloc_seq});
    } else {
      children[r.delta->chain_pointer].push_back(&r);
    }
  }

  // Per head: the deepest non-merged leaf is the tail. With every leaf merged the head itself is current.
  std::map<HierKey, std::vector<RecoveredKey>> by_key;
  std::vector<std::pair<LogAddr, std::uint32_t>> stack;
  for (const Head& h : heads) {
    RecoveredKey best{*h.row->key, h.row->addr, h.row->addr, 0};
    stack.assign(1, {h.row->addr, 0});
    while (!stack.empty()) {
      auto [addr, depth] = stack.back();
      stack.pop_back();
      auto it = children.find(addr);
      if (it == children.end()) continue;
      for (const ScannedRow* child : it->second) {
        const std::uint32_t d = depth + 1;
        auto grand = children.find(child->addr);
        const bool is_leaf = grand == children.end() || grand->second.empty();
        if (is_leaf && !child->delta->merged) {
          if (d > best.chain_len || (d == best.chain_len && child->addr > best.tail)) {
            best.tail = child->addr;
            best.chain_len = d;
          }
        }
        if (d < kMaxChainDepth) stack.push_back({child->addr, d});
      }
    }
    by_key[best.key].push_back(best);
  }

  std::unordered_map<LogAddr, std::uint64_t> seq_of;
  for (const Head& h : heads) seq_of[h.row->addr] = h.seq;
  for (auto& [key, candidates] : by_key) {
    auto winner = std::max_element(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
      if (a.chain_len != b.chain_len) return a.chain_len < b.chain_len;
      if (seq_of[a.head] != seq_of[b.head]) return seq_of[a.head] < seq_of[b.head];
      return a.head < b.head;
    });
    for (auto& c : candidates) {
      if (&c != &*winner) FOCUS_RETURN_IF_ERROR(mark_invalid(c.head));
    }
    recovered_.push_back(*winner);
  }
  return Status::OK();
}

Status Plog::recycle(Chunk& c) {
  const std::uint64_t clog_used = c.clog_cursor.load(std::memory_order_acquire);
  const std::uint64_t dlog_used = c.dlog_cursor.load(std::memory_order_acquire);
  if (clog_used > 0) {
    FOCUS_RETURN_IF_ERROR(backend_.write_at(c.clog_base, std::string(clog_used, '\0')));
    FOCUS_RETURN_IF_ERROR(backend_.flush_range(c.clog_base, clog_used));
  }
  if (dlog_used > 0) {
    FOCUS_RETURN_IF_ERROR(backend_.write_at(c.dlog_base, std::string(dlog_used, '\0')));
    FOCUS_RETURN_IF_ERROR(backend_.flush_range(c.dlog_base, dlog_used));
  }
  backend_.fence();

  std::lock_guard lock(alloc_mu_);
  if (c.prev != kNoChunk && chunks_[c.prev]->in_use.load(std::memory_order_acquire)) {
    chunks_[c.prev]->next = c.next;
    FOCUS_RETURN_IF_ERROR(persist_chunk_entry(*chunks_[c.prev]));
  }
  if (c.next != kNoChunk && chunks_[c.next]->in_use.load(std::memory_order_acquire)) {
    chunks_[c.next]->prev = c.prev;
    FOCUS_RETURN_IF_ERROR(persist_chunk_entry(*chunks_[c.next]));
  }
  c.prev = c.next = kNoChunk;
  c.clog_cursor.store(0, std::memory_order_relaxed);
  c.dlog_cursor.store(0, std::memory_order_relaxed);
  c.live_bytes.store(0, std::memory_order_relaxed);
  c.in_use.store(false, std::memory_order_release);
  chunks_in_use_.fetch_sub(1, std::memory_order_relaxed);
  return persist_chunk_entry(c);
}

Result<std::uint64_t> Plog::gc_chunk(std::uint32_t chunk_id, Relocator& relocator) {
  if (chunk_id >= chunks_.size() || !chunks_[chunk_id]->in_use.load(std::memory_order_acquire)) {
    return Status(ErrorCode::kBadAddress, "chunk " + std::to_string(chunk_id) + " not in use");
  }
  Chunk& c = *chunks_[chunk_id];
  if (c.gc.exchange(true, std::memory_order_acq_rel)) return Status(ErrorCode::kChunkBusy);
  struct Clear {
    std::atomic<bool>& flag;
    ~Clear() { flag.store(false, std::memory_order_release); }
  } clear{c.gc};

  if (open_chunk_.load(std::memory_order_acquire) == chunk_id) FOCUS_RETURN_IF_ERROR(rotate_from(chunk_id));
  // Appenders that picked this chunk before the seal finish before we look at it.
  relocator.quiesce();

  std::vector<std::pair<LogAddr, HierKey>> valid;
  FOCUS_RETURN_IF_ERROR(scan_chunk(chunk_id, [&](const ScannedRow& r) {
    if (r.kind == ExtentKind::kCLog && !r.invalid) valid.emplace_back(r.addr, *r.key);
  }));
  std::uint64_t copied = 0;
  for (const auto& [addr, key] : valid) {
    auto n = relocator.relocate(addr, key);
    if (!n.ok()) return n.status();
    copied += *n;
  }
  relocator.quiesce();
  FOCUS_RETURN_IF_ERROR(recycle(c));
  const std::uint64_t capacity = chunk_size_;
  return capacity > copied ? capacity - copied : 0;
}

std::vector<std::uint32_t> Plog::gc_candidates() const {
  std::vector<std::uint32_t> out;
  if (region_utilization() <= options_.gc_region_utilization) return out;
  const std::uint32_t open = open_chunk_.load(std::memory_order_acquire);
  for (const auto& c : chunks_) {
    if (!c->in_use.load(std::memory_order_acquire) || c->id == open) continue;
    const double live = static_cast<double>(c->live_bytes.load(std::memory_order_relaxed));
    if (live / options_.clog_extent < options_.gc_live_ratio) out.push_back(c->id);
  }
  return out;
}

double Plog::region_utilization() const {
  return chunks_.empty() ? 0.0
                         : static_cast<double>(chunks_in_use_.load(std::memory_order_relaxed)) / chunks_.size();
}

ChunkInfo Plog::chunk_info(std::uint32_t chunk_id) const {
  const Chunk& c = *chunks_.at(chunk_id);
  ChunkInfo i;
  i.chunk_id = c.id;
  i.clog_base = c.clog_base;
  i.clog_capacity = options_.clog_extent;
  i.clog_cursor = c.clog_cursor.load(std::memory_order_acquire);
  i.dlog_base = c.dlog_base;
  i.dlog_capacity = options_.dlog_extent;
  i.dlog_cursor = c.dlog_cursor.load(std::memory_order_acquire);
  i.live_bytes = c.live_bytes.load(std::memory_order_relaxed);
  i.in_use = c.in_use.load(std::memory_order_acquire);
  i.open = open_chunk_.load(std::memory_order_acquire) == chunk_id;
  i.prev = c.prev;
  i.next = c.next;
  i.alloc_seq = c.alloc_seq;
  return i;
}

}  // namespace focus
