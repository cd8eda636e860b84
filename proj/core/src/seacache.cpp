#include "focus/seacache.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace focus {

namespace {

// Slot layout. The checksum covers everything from kVarUsedOff to the end of the slot.
constexpr std::size_t kSeqOff = 0;
constexpr std::size_t kAccessOff = 8;
constexpr std::size_t kPlogOff = 16;
constexpr std::size_t kIndexPtrOff = 24;
constexpr std::size_t kChainOff = 32;
constexpr std::size_t kCrcOff = 36;
constexpr std::size_t kVarUsedOff = 40;
constexpr std::size_t kGenOff = 42;
constexpr std::size_t kFlagsOff = 43;
constexpr std::size_t kPayloadOff = 48;

std::atomic_ref<std::uint64_t> word_at(char* slot, std::size_t off) {
  return std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(slot + off));
}

std::uint32_t slot_crc(const char* slot, std::size_t size) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(slot + kVarUsedOff), static_cast<uInt>(size - kVarUsedOff)));
}

std::uint64_t cache_word(std::uint32_t page, std::uint16_t slot, std::uint8_t gen) {
  return pack_index_value({Location::Cache({page, slot, gen}), 0});
}

std::mt19937_64& admission_rng(std::uint64_t seed) {
  thread_local std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (thread_slot() + 1)));
  return rng;
}

}  // namespace

double lifetime_ms(const SchemaStats& s) {
  return std::ldexp(1.0, -static_cast<int>(s.fail_count)) * s.hit_ratio * (1.0 - s.row_occupancy) * s.retention_ms;
}

bool should_admit(double hit_ratio, double hit_threshold, std::mt19937_64& rng) {
  if (hit_ratio > hit_threshold) return true;
  if (hit_ratio <= 0.0) return false;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < hit_ratio / hit_threshold;
}

struct SeaCache::Page {
  std::uint32_t id = 0;
  SchemaId schema = 0;
  std::uint32_t schema_version = 0;
  std::uint32_t slot_size = 0;
  std::uint16_t slot_count = 0;
  std::uint16_t row_count = 0;
  std::uint32_t prev = 0xFFFFFFFFu;
  std::uint32_t next = 0xFFFFFFFFu;
  std::vector<std::uint64_t> bitmap;
  std::unique_ptr<std::uint64_t[]> storage;

  char* slot(std::uint16_t i) const { return reinterpret_cast<char*>(storage.get()) + std::size_t{i} * slot_size; }
  bool used(std::uint16_t i) const { return (bitmap[i / 64] >> (i % 64)) & 1; }
};

struct SeaCache::SchemaState {
  SchemaId id = 0;
  std::atomic<double> hit_ratio{0.0};
  std::atomic<std::uint32_t> fail_count{0};
  std::atomic<std::uint64_t> hits{0};
  std::atomic<std::uint64_t> accesses{0};
  // consumer side
  std::uint32_t slot_size = 0;
  std::uint16_t slots_per_page = 0;
  std::vector<Page*> pages;
  std::uint64_t used_slots = 0;
};

SeaCache::SeaCache(GlobalIndex& index, const SchemaRegistry& registry, RowLoader loader, SeaCacheOptions options,
                   const Clock* clock)
    : index_(index),
      registry_(registry),
      loader_(std::move(loader)),
      options_(options),
      clock_(clock != nullptr ? clock : &steady_),
      queue_(options.task_queue_len),
      consumer_rng_(options.seed) {
  max_pages_ = static_cast<std::uint32_t>(std::min<std::uint64_t>(options_.capacity_bytes / options_.page_size, 0xFFFFFF));
  pages_ = std::make_unique<std::atomic<Page*>[]>(max_pages_ + 1);
  states_ = std::make_unique<std::atomic<SchemaState*>[]>(SchemaRegistry::kMaxSchemas);
  if (options_.background) worker_ = std::thread([this] { worker_loop(); });
}

SeaCache::~SeaCache() {
  stop_.store(true, std::memory_order_release);
  if (worker_.joinable()) worker_.join();
}

SeaCache::SchemaState& SeaCache::state(SchemaId id) const {
  const std::size_t i = id % SchemaRegistry::kMaxSchemas;
  SchemaState* s = states_[i].load(std::memory_order_acquire);
  if (s != nullptr) return *s;
  std::lock_guard lock(states_mu_);
  s = states_[i].load(std::memory_order_acquire);
  if (s == nullptr) {
    auto fresh = std::make_unique<SchemaState>();
    fresh->id = id;
    s = fresh.get();
    owned_states_.push_back(std::move(fresh));
    states_[i].store(s, std::memory_order_release);
  }
  return *s;
}

void SeaCache::record_access(SchemaId id, bool hit) {
  SchemaState& st = state(id);
  st.accesses.fetch_add(1, std::memory_order_relaxed);
  if (hit) st.hits.fetch_add(1, std::memory_order_relaxed);
  double h = st.hit_ratio.load(std::memory_order_relaxed);
  const double sample = hit ? 1.0 : 0.0;
  while (!st.hit_ratio.compare_exchange_weak(h, h + options_.ema_alpha * (sample - h), std::memory_order_relaxed)) {
  }
}

bool SeaCache::enqueue(Task task) {
  in_flight_.fetch_add(1, std::memory_order_acq_rel);
  if (queue_.push(std::move(task))) return true;
  in_flight_.fetch_sub(1, std::memory_order_acq_rel);
  tasks_dropped_.add();
  return false;
}

void SeaCache::on_hit(SchemaId schema, std::uint64_t word) {
  hits_.add();
  record_access(schema, true);
  Task t;
  t.kind = Task::kRefresh;
  t.schema = schema;
  t.word = word;
  if (!enqueue(std::move(t))) refresh_dropped_.add();
}

void SeaCache::on_miss(SchemaId schema, GlobalIndex::Entry* entry, std::uint64_t observed_word) {
  misses_.add();
  record_access(schema, false);
  const bool admit = warming_up() ||
                     should_admit(state(schema).hit_ratio.load(std::memory_order_relaxed), options_.hit_threshold,
                                  admission_rng(options_.seed));
  if (!admit) return;
  Task t;
  t.kind = Task::kAdmit;
  t.schema = schema;
  t.entry = entry;
  t.word = observed_word;
  if (!enqueue(std::move(t))) rejected_.fetch_add(1, std::memory_order_relaxed);
}

std::optional<SeaCache::Slot> SeaCache::slot_for(std::uint64_t word) const {
  const CacheRef ref = unpack_index_value(word).loc.cache;
  if (ref.page >= max_pages_) return std::nullopt;
  Page* page = pages_[ref.page].load(std::memory_order_acquire);
  if (page == nullptr || ref.slot >= page->slot_count) return std::nullopt;
  return Slot{page, ref.slot, page->slot(ref.slot)};
}

Result<std::optional<CachedRow>> SeaCache::read_cached(GlobalIndex::Entry* entry, std::uint64_t word,
                                                       const SchemaDef& schema) {
  probes_.add();
  auto s = slot_for(word);
  if (!s) return std::optional<CachedRow>();
  const CacheRef ref = unpack_index_value(word).loc.cache;
  const std::uint32_t size = s->page->slot_size;
  thread_local std::vector<std::uint64_t> buffer;
  buffer.resize(size / 8 + 1);
  char* copy = reinterpret_cast<char*>(buffer.data());
  for (;;) {
    const std::uint64_t s1 = word_at(s->bytes, kSeqOff).load(std::memory_order_acquire);
    if (s1 & 1) {
      std::this_thread::yield();
      continue;
    }
    std::memcpy(copy + kPlogOff, s->bytes + kPlogOff, size - kPlogOff);
    std::atomic_thread_fence(std::memory_order_acquire);
    if (word_at(s->bytes, kSeqOff).load(std::memory_order_relaxed) == s1) break;
  }
  const auto gen = static_cast<std::uint8_t>(copy[kGenOff]);
  if (copy[kFlagsOff] == 0 || gen != ref.gen || s->page->schema != schema.schema_id ||
      load_le<std::uint64_t>(copy + kIndexPtrOff) != reinterpret_cast<std::uintptr_t>(entry)) {
    return std::optional<CachedRow>();
  }
  CachedRow row;
  row.plog_tail = load_le<std::uint64_t>(copy + kPlogOff);
  row.chain_len = load_le<std::uint32_t>(copy + kChainOff);
  if (slot_crc(copy, size) != load_le<std::uint32_t>(copy + kCrcOff)) {
    // Drop the row and let the caller fall back to the log.
    checksum_failures_.add();
    std::uint64_t expected = word;
    if (entry->compare_exchange(expected, pack_index_value({Location::Log(row.plog_tail), row.chain_len}))) {
      Task t;
      t.kind = Task::kRelease;
      t.schema = schema.schema_id;
      t.entry = entry;
      t.word = word;
      enqueue(std::move(t));
    }
    return std::optional<CachedRow>();
  }
  auto values = decode_row(copy, schema);
  if (!values.ok()) return values.status();
  row.values = std::move(values).value();
  return std::optional<CachedRow>(std::move(row));
}

void SeaCache::detached(GlobalIndex::Entry* entry, std::uint64_t cache_word, std::uint64_t new_word,
                        const FieldUpdates* absorb) {
  Task t;
  t.entry = entry;
  t.word = cache_word;
  t.new_word = new_word;
  t.kind = Task::kRelease;
  if (absorb != nullptr) {
    auto s = slot_for(cache_word);
    const SchemaDef* schema = s ? registry_.get(s->page->schema) : nullptr;
    bool fixed_only = schema != nullptr;
    for (const auto& u : *absorb) {
      if (!fixed_only || u.first >= schema->field_count() || schema->fields[u.first].kind != FieldKind::kFixed) {
        fixed_only = false;
        break;
      }
    }
    if (fixed_only) {
      t.kind = Task::kAbsorb;
      t.schema = schema->schema_id;
      t.updates = *absorb;
    }
  }
  enqueue(std::move(t));
}

std::uint32_t SeaCache::slot_size(const SchemaDef& schema) const {
  const std::uint32_t var = schema.has_variable_fields() ? options_.var_quota : 0;
  return static_cast<std::uint32_t>(align_up(kPayloadOff + schema.fixed_region_size + var, 8));
}

Status SeaCache::encode_row(char* slot, const SchemaDef& schema, const FieldValues& values) const {
  if (values.size() != schema.field_count()) return Status(ErrorCode::kMissingFieldValue);
  char* fixed = slot + kPayloadOff;
  char* var_area = fixed + schema.fixed_region_size;
  std::uint32_t var_used = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const FieldDef& f = schema.fields[i];
    char* dst = fixed + schema.fixed_offsets[i];
    if (f.kind == FieldKind::kFixed) {
      if (values[i].size() != f.size) return Status(ErrorCode::kFixedSizeMismatch, f.name);
      std::memcpy(dst, values[i].data(), f.size);
      continue;
    }
    const std::string& v = values[i];
    if (v.size() > kInlineVarLimit) {
      if (var_used + v.size() > options_.var_quota) return Status(ErrorCode::kValueTooLarge, "variable area quota");
      std::memcpy(var_area + var_used, v.data(), v.size());
      const std::string head = make_var_head(v, var_used);
      std::memcpy(dst, head.data(), kVarHeadSize);
      var_used += static_cast<std::uint32_t>(v.size());
    } else {
      const std::string head = make_var_head(v, 0);
      std::memcpy(dst, head.data(), kVarHeadSize);
    }
  }
  store_le<std::uint16_t>(slot + kVarUsedOff, static_cast<std::uint16_t>(var_used));
  return Status::OK();
}

Result<FieldValues> SeaCache::decode_row(const char* slot, const SchemaDef& schema) const {
  const char* fixed = slot + kPayloadOff;
  const char* var_area = fixed + schema.fixed_region_size;
  const std::uint16_t var_used = load_le<std::uint16_t>(slot + kVarUsedOff);
  FieldValues out(schema.field_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const FieldDef& f = schema.fields[i];
    const char* src = fixed + schema.fixed_offsets[i];
    if (f.kind == FieldKind::kFixed) {
      out[i].assign(src, f.size);
      continue;
    }
    const VarHead vh = parse_var_head(std::string_view(src, kVarHeadSize));
    if (vh.is_inline()) {
      out[i] = vh.inline_bytes();
    } else {
      if (vh.payload + vh.size > var_used) return Status(ErrorCode::kCorruptHeader, "cached variable field");
      out[i].assign(var_area + vh.payload, vh.size);
    }
  }
  return out;
}

Result<SeaCache::Slot> SeaCache::allocate_slot(SchemaState& st, const SchemaDef& schema) {
  if (st.slot_size == 0) {
    st.slot_size = slot_size(schema);
    st.slots_per_page = static_cast<std::uint16_t>(std::min<std::uint32_t>(options_.page_size / st.slot_size, 0xFFFF));
    if (st.slots_per_page == 0) return Status(ErrorCode::kValueTooLarge, "row larger than a cache page");
  }
  Page* page = nullptr;
  for (Page* p : st.pages) {
    if (p->row_count < p->slot_count) {
      page = p;
      break;
    }
  }
  if (page == nullptr) {
    const std::uint32_t id = page_count_.load(std::memory_order_relaxed);
    if (id >= max_pages_) return Status(ErrorCode::kPoolExhausted);
    auto fresh = std::make_unique<Page>();
    fresh->id = id;
    fresh->schema = schema.schema_id;
    fresh->schema_version = schema.version;
    fresh->slot_size = st.slot_size;
    fresh->slot_count = st.slots_per_page;
    fresh->bitmap.assign((fresh->slot_count + 63) / 64, 0);
    fresh->storage = std::make_unique<std::uint64_t[]>(options_.page_size / 8);
    if (!st.pages.empty()) {
      fresh->prev = st.pages.back()->id;
      st.pages.back()->next = id;
    }
    page = fresh.get();
    st.pages.push_back(page);
    owned_pages_.push_back(std::move(fresh));
    pages_[id].store(page, std::memory_order_release);
    page_count_.store(id + 1, std::memory_order_release);
  }
  // First zero bit.
  std::uint16_t index = 0;
  for (std::size_t w = 0; w < page->bitmap.size(); ++w) {
    if (page->bitmap[w] == ~std::uint64_t{0}) continue;
    index = static_cast<std::uint16_t>(w * 64 + std::countr_one(page->bitmap[w]));
    break;
  }
  page->bitmap[index / 64] |= std::uint64_t{1} << (index % 64);
  ++page->row_count;
  ++st.used_slots;
  used_bytes_.fetch_add(page->slot_size, std::memory_order_relaxed);
  return Slot{page, index, page->slot(index)};
}

void SeaCache::free_slot(Page& page, std::uint16_t index) {
  char* slot = page.slot(index);
  auto seq = word_at(slot, kSeqOff);
  seq.fetch_add(1, std::memory_order_acq_rel);
  slot[kFlagsOff] = 0;
  slot[kGenOff] = static_cast<char>(static_cast<std::uint8_t>(slot[kGenOff]) + 1);
  seq.fetch_add(1, std::memory_order_release);
  page.bitmap[index / 64] &= ~(std::uint64_t{1} << (index % 64));
  --page.row_count;
  --state(page.schema).used_slots;
  used_bytes_.fetch_sub(page.slot_size, std::memory_order_relaxed);
}

bool SeaCache::orphaned(const Page& page, std::uint16_t index) const {
  const char* slot = page.slot(index);
  auto* entry = reinterpret_cast<GlobalIndex::Entry*>(static_cast<std::uintptr_t>(load_le<std::uint64_t>(slot + kIndexPtrOff)));
  const auto gen = static_cast<std::uint8_t>(slot[kGenOff]);
  return entry == nullptr || entry->load() != cache_word(page.id, index, gen);
}

Status SeaCache::admit(GlobalIndex::Entry* entry, std::uint64_t observed, const SchemaDef& schema) {
  if (observed == kAbsentWord || (observed >> 63) != 0) return Status::OK();
  // A merge folds deltas into the head in place and then reinstalls the head word, so an identical word
  // does not imply identical contents unless merges are held off until the swap.
  std::unique_lock<std::mutex> hold;
  if (admit_guard_) hold = admit_guard_(*entry);
  if (entry->load() != observed) return Status::OK();
  const IndexValue iv = unpack_index_value(observed);
  auto values = loader_(schema, iv.loc.log_addr);
  if (!values.ok()) return values.status();
  SchemaState& st = state(schema.schema_id);
  auto slot = allocate_slot(st, schema);
  if (!slot.ok()) {
    rejected_.fetch_add(1, std::memory_order_relaxed);
    return slot.status();
  }
  char* bytes = slot->bytes;
  auto seq = word_at(bytes, kSeqOff);
  seq.fetch_add(1, std::memory_order_acq_rel);
  Status st_enc = encode_row(bytes, schema, *values);
  const auto gen = static_cast<std::uint8_t>(bytes[kGenOff]);
  if (st_enc.ok()) {
    store_le<std::uint64_t>(bytes + kPlogOff, iv.loc.log_addr);
    store_le<std::uint64_t>(bytes + kIndexPtrOff, reinterpret_cast<std::uintptr_t>(entry));
    store_le<std::uint32_t>(bytes + kChainOff, iv.chain_len);
    bytes[kFlagsOff] = 1;
    word_at(bytes, kAccessOff).store(clock_->now_us(), std::memory_order_relaxed);
    store_le<std::uint32_t>(bytes + kCrcOff, slot_crc(bytes, slot->page->slot_size));
  }
  seq.fetch_add(1, std::memory_order_release);
  if (!st_enc.ok()) {
    free_slot(*slot->page, slot->index);
    rejected_.fetch_add(1, std::memory_order_relaxed);
    return Status::OK();
  }
  std::uint64_t expected = observed;
  if (!entry->compare_exchange(expected, cache_word(slot->page->id, slot->index, gen))) {
    free_slot(*slot->page, slot->index);
    return Status::OK();
  }
  admitted_.fetch_add(1, std::memory_order_relaxed);
  if (usage() >= options_.page_usage_target) end_warm_up();
  return Status::OK();
}

void SeaCache::refresh(const Task& task) {
  auto s = slot_for(task.word);
  if (!s || !s->page->used(s->index)) return;
  if (static_cast<std::uint8_t>(s->bytes[kGenOff]) != unpack_index_value(task.word).loc.cache.gen) return;
  word_at(s->bytes, kAccessOff).store(clock_->now_us(), std::memory_order_relaxed);
}

void SeaCache::absorb(Task& task) {
  auto s = slot_for(task.word);
  if (!s || !s->page->used(s->index)) return;
  char* bytes = s->bytes;
  if (static_cast<std::uint8_t>(bytes[kGenOff]) != unpack_index_value(task.word).loc.cache.gen) return;
  const SchemaDef* schema = registry_.get(s->page->schema);
  if (schema == nullptr || task.entry->load() != task.new_word) {
    free_slot(*s->page, s->index);
    orphans_.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  const IndexValue iv = unpack_index_value(task.new_word);
  auto seq = word_at(bytes, kSeqOff);
  seq.fetch_add(1, std::memory_order_acq_rel);
  for (const auto& [id, value] : task.updates) {
    std::memcpy(bytes + kPayloadOff + schema->fixed_offsets[id], value.data(), value.size());
  }
  const auto gen = static_cast<std::uint8_t>(static_cast<std::uint8_t>(bytes[kGenOff]) + 1);
  bytes[kGenOff] = static_cast<char>(gen);
  store_le<std::uint64_t>(bytes + kPlogOff, iv.loc.log_addr);
  store_le<std::uint32_t>(bytes + kChainOff, iv.chain_len);
  store_le<std::uint32_t>(bytes + kCrcOff, slot_crc(bytes, s->page->slot_size));
  seq.fetch_add(1, std::memory_order_release);
  std::uint64_t expected = task.new_word;
  if (!task.entry->compare_exchange(expected, cache_word(s->page->id, s->index, gen))) {
    free_slot(*s->page, s->index);
    orphans_.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  absorbed_.fetch_add(1, std::memory_order_relaxed);
}

void SeaCache::release(const Task& task) {
  auto s = slot_for(task.word);
  if (!s || !s->page->used(s->index)) return;
  if (static_cast<std::uint8_t>(s->bytes[kGenOff]) != unpack_index_value(task.word).loc.cache.gen) return;
  if (!orphaned(*s->page, s->index)) return;
  free_slot(*s->page, s->index);
  orphans_.fetch_add(1, std::memory_order_relaxed);
}

void SeaCache::run_task(Task& task) {
  switch (task.kind) {
    case Task::kRefresh:
      refresh(task);
      break;
    case Task::kAdmit: {
      const SchemaDef* schema = registry_.get(task.schema);
      if (schema == nullptr) break;
      Status st = admit(task.entry, task.word, *schema);
      if (st.code() == ErrorCode::kPoolExhausted) evict_pass(options_.page_usage_target);
      break;
    }
    case Task::kAbsorb:
      absorb(task);
      break;
    case Task::kRelease:
      release(task);
      break;
    case Task::kNone:
      break;
  }
}

std::size_t SeaCache::pump(std::size_t max_tasks) {
  std::lock_guard lock(consume_mu_);
  std::size_t n = 0;
  while (n < max_tasks) {
    auto task = queue_.pop();
    if (!task) break;
    run_task(*task);
    in_flight_.fetch_sub(1, std::memory_order_acq_rel);
    ++n;
  }
  if (usage() > options_.page_usage_target) evict_pass(options_.page_usage_target);
  return n;
}

void SeaCache::drain() {
  if (!options_.background) {
    while (pump() > 0) {
    }
    return;
  }
  while (in_flight_.load(std::memory_order_acquire) != 0) std::this_thread::sleep_for(std::chrono::microseconds(50));
  std::lock_guard lock(consume_mu_);  // wait out a task still running
}

void SeaCache::worker_loop() {
  while (!stop_.load(std::memory_order_acquire)) {
    if (pump(256) == 0) std::this_thread::sleep_for(options_.worker_idle);
  }
}

double SeaCache::usage() const {
  return options_.capacity_bytes == 0
             ? 1.0
             : static_cast<double>(used_bytes_.load(std::memory_order_relaxed)) / options_.capacity_bytes;
}

SchemaStats SeaCache::schema_stats(SchemaId id) const {
  SchemaState& st = state(id);
  SchemaStats s;
  s.hit_ratio = st.hit_ratio.load(std::memory_order_relaxed);
  const std::uint64_t slots = std::uint64_t{st.slots_per_page} * st.pages.size();
  s.row_occupancy = slots == 0 ? 0.0 : static_cast<double>(st.used_slots) / slots;
  s.fail_count = st.fail_count.load(std::memory_order_relaxed);
  s.retention_ms = options_.rw_table.window_ms(s.hit_ratio);
  return s;
}

void SeaCache::set_hit_ratio(SchemaId id, double h) { state(id).hit_ratio.store(h, std::memory_order_relaxed); }
void SeaCache::set_fail_count(SchemaId id, std::uint32_t n) { state(id).fail_count.store(n, std::memory_order_relaxed); }

std::uint64_t SeaCache::evict_pass(double target) {
  last_pass_.clear();
  if (usage() <= target) return 0;
  std::vector<SchemaState*> order;
  {
    std::lock_guard lock(states_mu_);
    for (auto& s : owned_states_) {
      if (!s->pages.empty()) order.push_back(s.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const SchemaState* a, const SchemaState* b) {
    return a->hit_ratio.load(std::memory_order_relaxed) < b->hit_ratio.load(std::memory_order_relaxed);
  });

  std::uint64_t total = 0;
  for (std::uint32_t round = 0; round < options_.max_evict_rounds; ++round) {
    const std::uint64_t now = clock_->now_us();
    std::uint64_t evicted = 0;
    bool halted = false;
    const std::uint32_t n_in_force = order.empty() ? 0 : order.front()->fail_count.load(std::memory_order_relaxed);
    for (SchemaState* st : order) {
      const double life_us = lifetime_ms(schema_stats(st->id)) * 1000.0;
      for (Page* page : st->pages) {
        for (std::uint16_t i = 0; i < page->slot_count && !halted; ++i) {
          if (!page->used(i)) continue;
          char* bytes = page->slot(i);
          if (orphaned(*page, i)) {
            free_slot(*page, i);
            orphans_.fetch_add(1, std::memory_order_relaxed);
          } else {
            const std::uint64_t last = word_at(bytes, kAccessOff).load(std::memory_order_relaxed);
            const double age = now > last ? static_cast<double>(now - last) : 0.0;
            if (age > life_us) {
              auto* entry = reinterpret_cast<GlobalIndex::Entry*>(
                  static_cast<std::uintptr_t>(load_le<std::uint64_t>(bytes + kIndexPtrOff)));
              std::uint64_t expected = cache_word(page->id, i, static_cast<std::uint8_t>(bytes[kGenOff]));
              const std::uint64_t back = pack_index_value(
                  {Location::Log(load_le<std::uint64_t>(bytes + kPlogOff)), load_le<std::uint32_t>(bytes + kChainOff)});
              if (entry->compare_exchange(expected, back)) {
                ++evicted;
                evicted_.fetch_add(1, std::memory_order_relaxed);
              } else {
                orphans_.fetch_add(1, std::memory_order_relaxed);
              }
              free_slot(*page, i);
            }
          }
          if (usage() <= target) halted = true;
        }
        if (halted) break;
      }
      if (halted) break;
    }
    total += evicted;
    for (SchemaState* st : order) {
      if (evicted > 0) {
        st->fail_count.store(0, std::memory_order_relaxed);
      } else {
        st->fail_count.fetch_add(1, std::memory_order_relaxed);
      }
    }
    last_pass_.push_back({round, evicted, n_in_force, usage()});
    if (halted || usage() <= target) break;
  }
  return total;
}

SeaCacheStats SeaCache::stats() const {
  SeaCacheStats s;
  s.hits = hits_.load();
  s.misses = misses_.load();
  s.probes = probes_.load();
  s.admitted = admitted_.load(std::memory_order_relaxed);
  s.rejected = rejected_.load(std::memory_order_relaxed);
  s.evicted = evicted_.load(std::memory_order_relaxed);
  s.orphans_reclaimed = orphans_.load(std::memory_order_relaxed);
  s.absorbed = absorbed_.load(std::memory_order_relaxed);
  s.refresh_dropped = refresh_dropped_.load();
  s.tasks_dropped = tasks_dropped_.load();
  s.checksum_failures = checksum_failures_.load();
  s.used_bytes = used_bytes_.load(std::memory_order_relaxed);
  s.pages = page_count_.load(std::memory_order_relaxed);
  s.usage = usage();
  return s;
}

void SeaCache::reset_counters() {
  hits_.reset();
  misses_.reset();
  probes_.reset();
  refresh_dropped_.reset();
  tasks_dropped_.reset();
  checksum_failures_.reset();
}

void SeaCache::corrupt_for_test(std::uint64_t word, std::size_t payload_offset) {
  std::lock_guard lock(consume_mu_);
  auto s = slot_for(word);
  if (!s) return;
  s->bytes[kPayloadOff + payload_offset] ^= 0x01;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> SeaCache::page_occupancy(SchemaId id) const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  SchemaState& st = state(id);
  for (const Page* p : st.pages) {
    std::uint32_t pop = 0;
    for (std::uint64_t w : p->bitmap) pop += static_cast<std::uint32_t>(std::popcount(w));
    out.emplace_back(p->row_count, pop);
  }
  return out;
}

}  // namespace focus
