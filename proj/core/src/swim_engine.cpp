#include "focus/swim_engine.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace focus {

namespace {

constexpr int kMaxWalk = 4096;

std::uint64_t log_word(LogAddr addr, std::uint32_t chain_len) {
  return pack_index_value({Location::Log(addr), chain_len});
}

bool is_cache_word(std::uint64_t w) { return w != kAbsentWord && (w >> 63) != 0; }

}  // namespace

SwimEngine::SwimEngine(Plog& log, GlobalIndex& index, const SchemaRegistry& registry, SwimOptions options)
    : log_(log), backend_(log.backend()), index_(index), registry_(registry), options_(options) {
  options_.restore_threshold = std::min(options_.restore_threshold, kMaxChainLen - 1);
  if (options_.background) worker_ = std::thread([this] { worker_loop(); });
}

SwimEngine::~SwimEngine() { stop_background(); }

void SwimEngine::stop_background() {
  {
    std::lock_guard lock(queue_mu_);
    stop_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

const SchemaDef* SwimEngine::schema_for(const HierKey& key, Status* err) const {
  const SchemaDef* s = registry_.get(key.schema_id);
  if (s == nullptr) *err = Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  return s;
}

std::uint64_t SwimEngine::seq_begin(std::size_t stripe) const {
  for (;;) {
    const std::uint64_t s = merge_seq_[stripe].seq.load(std::memory_order_acquire);
    if ((s & 1) == 0) return s;
    std::this_thread::yield();
  }
}

bool SwimEngine::seq_validate(std::size_t stripe, std::uint64_t seq) const {
  std::atomic_thread_fence(std::memory_order_acquire);
  return merge_seq_[stripe].seq.load(std::memory_order_relaxed) == seq;
}

Status SwimEngine::rebuild_index() {
  for (const RecoveredKey& rk : log_.recovered()) {
    auto [entry, inserted] = index_.insert_entry(rk.key, {Location::Log(rk.tail), rk.chain_len});
    if (!inserted) return Status(ErrorCode::kCorruptHeader, "duplicate recovered key");
    if (rk.chain_len >= options_.merge_min_chain && rk.chain_len > 0) enqueue_merge(entry);
  }
  log_.clear_recovered();
  return Status::OK();
}

Result<std::optional<SwimEngine::Tail>> SwimEngine::resolve(GlobalIndex::Entry* entry, std::uint64_t word,
                                                            const SchemaDef& schema) {
  const IndexValue v = unpack_index_value(word);
  if (v.loc.is_log()) return std::optional<Tail>(Tail{v.loc.log_addr, v.chain_len, std::nullopt});
  if (cache_ == nullptr) return Status(ErrorCode::kBadAddress, "cache location without a cache");
  auto row = cache_->read_cached(entry, word, schema);
  if (!row.ok()) return row.status();
  if (!row->has_value()) return std::optional<Tail>();
  Tail t;
  t.addr = (*row)->plog_tail;
  t.chain_len = (*row)->chain_len;
  t.cached = std::move(*row);
  return std::optional<Tail>(std::move(t));
}

Result<FieldValues> SwimEngine::read_chain(const SchemaDef& schema, LogAddr tail, const FieldIdSet* fields,
                                           ReadTrace* trace) {
  const std::size_t n = schema.field_count();
  FieldIdSet all;
  if (fields == nullptr) {
    all.resize(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<FieldId>(i);
    fields = &all;
  }
  std::vector<int> pos(n, -1);
  for (std::size_t i = 0; i < fields->size(); ++i) {
    const FieldId id = (*fields)[i];
    if (id >= n) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
    pos[id] = static_cast<int>(i);
  }
  std::vector<std::optional<std::string>> out(fields->size());
  std::size_t remaining = fields->size();

  auto read_var = [&](LogAddr head_addr) -> Result<std::string> {
    auto head = backend_.read(head_addr, kVarHeadSize);
    if (!head.ok()) return head.status();
    const VarHead vh = parse_var_head(*head);
    if (vh.is_inline()) return vh.inline_bytes();
    return backend_.read(vh.payload, vh.size);
  };

  LogAddr addr = tail;
  for (int depth = 0; remaining > 0; ++depth) {
    if (depth > kMaxWalk) return Status(ErrorCode::kCorruptHeader, "chain does not terminate");
    if (trace != nullptr) ++trace->rows_visited;
    auto info = log_.locate(addr);
    if (!info.ok()) return info.status();

    if (info->kind == ExtentKind::kDLog) {
      auto hdr = log_.read_delta_header(addr);
      if (!hdr.ok()) return hdr.status();
      bool wanted = false;
      for (FieldId id : hdr->field_ids) {
        if (id < n && pos[id] >= 0 && !out[pos[id]]) wanted = true;
      }
      if (wanted) {
        const RowReader reader = [&](std::size_t off, std::size_t len) { return backend_.read(addr + off, len); };
        auto locs = locate_delta_fields(schema, *hdr, reader);
        if (!locs.ok()) return locs.status();
        for (const DeltaFieldLoc& loc : *locs) {
          const int p = pos[loc.id];
          if (p < 0 || out[p]) continue;
          auto v = schema.fields[loc.id].kind == FieldKind::kFixed ? backend_.read(addr + loc.offset, loc.length)
                                                                    : read_var(addr + loc.offset);
          if (!v.ok()) return v.status();
          out[p] = std::move(v).value();
          --remaining;
        }
      }
      addr = hdr->chain_pointer;
      continue;
    }

    auto h = log_.read_complete_header(addr);
    if (!h.ok()) return h.status();
    if (h->kv_size == 0) return Status(ErrorCode::kCorruptHeader, "empty complete row");
    if (remaining * 2 > n) {
      auto bytes = backend_.read(addr, h->row_size());
      if (!bytes.ok()) return bytes.status();
      auto values = decode_complete(CompleteRowImage{addr, std::move(bytes).value()}, schema);
      if (!values.ok()) return values.status();
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i]) out[i] = std::move((*values)[(*fields)[i]]);
      }
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i]) continue;
        const FieldId id = (*fields)[i];
        auto slice = schema.field_slice(id);
        if (!slice.ok()) return slice.status();
        const LogAddr at = addr + h->fixed_base() + slice->offset;
        auto v = slice->kind == FieldKind::kFixed ? backend_.read(at, slice->length) : read_var(at);
        if (!v.ok()) return v.status();
        out[i] = std::move(v).value();
      }
    }
    remaining = 0;
  }

  FieldValues values;
  values.reserve(out.size());
  for (auto& v : out) values.push_back(std::move(*v));
  return values;
}

Result<LogAddr> SwimEngine::head_of(LogAddr tail) {
  LogAddr addr = tail;
  for (int depth = 0; depth <= kMaxWalk; ++depth) {
    auto info = log_.locate(addr);
    if (!info.ok()) return info.status();
    if (info->kind == ExtentKind::kCLog) return addr;
    auto hdr = log_.read_delta_header(addr);
    if (!hdr.ok()) return hdr.status();
    addr = hdr->chain_pointer;
  }
  return Status(ErrorCode::kCorruptHeader, "chain does not terminate");
}

Status SwimEngine::invalidate_chain(LogAddr tail) {
  auto head = head_of(tail);
  if (!head.ok()) return head.status();
  return log_.mark_invalid(*head);
}

void SwimEngine::after_swap(GlobalIndex::Entry* entry, std::uint64_t old_word, std::uint64_t new_word,
                            const FieldUpdates* absorb) {
  if (cache_ != nullptr && is_cache_word(old_word)) cache_->detached(entry, old_word, new_word, absorb);
}

Status SwimEngine::put_full(const HierKey& key, const FieldValues& values) {
  EpochManager::Guard guard(epochs_);
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  auto image = encode_complete(*schema, key, values);
  if (!image.ok()) return image.status();
  auto addr = log_.append_complete(std::move(image).value());
  if (!addr.ok()) return addr.status();
  const std::uint64_t fresh = log_word(*addr, 0);
  const IndexValue fresh_value{Location::Log(*addr), 0};

  GlobalIndex::Entry* entry = index_.find(key);
  for (;;) {
    if (entry == nullptr || entry->load() == kAbsentWord) {
      auto [e, inserted] = index_.insert_entry(key, fresh_value);
      if (inserted) break;
      entry = e;
      continue;
    }
    std::uint64_t w = entry->load();
    if (w == kAbsentWord) continue;
    auto t = resolve(entry, w, *schema);
    if (!t.ok()) return t.status();
    if (!t->has_value()) {
      cas_retries_.add();
      continue;
    }
    const std::uint64_t observed = w;
    if (entry->compare_exchange(w, fresh)) {
      FOCUS_RETURN_IF_ERROR(invalidate_chain((*t)->addr));
      after_swap(entry, observed, fresh, nullptr);
      break;
    }
    cas_retries_.add();
  }
  full_puts_.add();
  return Status::OK();
}

Status SwimEngine::rewrite_entry(GlobalIndex::Entry* entry, const SchemaDef& schema, const FieldUpdates* extra,
                                 std::optional<std::uint64_t> expected_word, bool* swapped) {
  *swapped = false;
  std::uint64_t w = expected_word ? *expected_word : entry->load();
  if (w == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
  auto t = resolve(entry, w, schema);
  if (!t.ok()) return t.status();
  if (!t->has_value()) return Status::OK();
  Tail& tail = **t;

  FieldValues values;
  if (tail.cached) {
    values = std::move(tail.cached->values);
  } else {
    auto v = read_chain(schema, tail.addr, nullptr, nullptr);
    if (!v.ok()) return entry->load() != w ? Status::OK() : v.status();  // retired under us; caller retries
    values = std::move(v).value();
  }
  if (extra != nullptr) {
    for (const auto& [id, bytes] : *extra) {
      if (id >= values.size()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
      values[id] = bytes;
    }
  }
  auto image = encode_complete(schema, entry->key(), values);
  if (!image.ok()) return image.status();
  auto addr = log_.append_complete(std::move(image).value());
  if (!addr.ok()) return addr.status();
  const std::uint64_t fresh = log_word(*addr, 0);
  const std::uint64_t observed = w;
  if (entry->compare_exchange(w, fresh)) {
    FOCUS_RETURN_IF_ERROR(invalidate_chain(tail.addr));
    after_swap(entry, observed, fresh, nullptr);
    *swapped = true;
    return Status::OK();
  }
  // Never published; keep recovery from treating it as a second head.
  return log_.mark_invalid(*addr);
}

Status SwimEngine::update_partial(const HierKey& key, FieldUpdates updates) {
  EpochManager::Guard guard(epochs_);
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  if (updates.empty()) return Status(ErrorCode::kEmptyFieldSet);
  for (const auto& [id, bytes] : updates) {
    if (id >= schema->field_count()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
    const FieldDef& f = schema->fields[id];
    if (f.kind == FieldKind::kFixed && bytes.size() != f.size) {
      return Status(ErrorCode::kFixedSizeMismatch, f.name);
    }
  }
  // Later duplicates win, as in encode_delta.
  std::stable_sort(updates.begin(), updates.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  FieldUpdates unique;
  for (auto& u : updates) {
    if (!unique.empty() && unique.back().first == u.first) {
      unique.back().second = std::move(u.second);
    } else {
      unique.push_back(std::move(u));
    }
  }
  updates = std::move(unique);

  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return Status(ErrorCode::kKeyAbsent);

  LogAddr delta = kNullAddr;
  std::uint32_t delta_chunk = 0;
  DeltaHeader delta_header;
  LogAddr delta_prev = kNullAddr;
  bool force_rewrite = false;

  for (;;) {
    std::uint64_t w = entry->load();
    if (w == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
    auto t = resolve(entry, w, *schema);
    if (!t.ok()) return t.status();
    if (!t->has_value()) {
      cas_retries_.add();
      continue;
    }
    const Tail& tail = **t;

    if (force_rewrite || tail.chain_len + 1 > options_.restore_threshold) {
      bool swapped = false;
      {
        auto held = latch(*entry);
        FOCUS_RETURN_IF_ERROR(rewrite_entry(entry, *schema, &updates, w, &swapped));
      }
      if (swapped) {
        restore_rewrites_.add();
        partial_updates_.add();
        return Status::OK();
      }
      cas_retries_.add();
      continue;
    }

    auto tail_info = log_.locate(tail.addr);
    if (!tail_info.ok()) return tail_info.status();
    if (delta == kNullAddr || delta_chunk != tail_info->chunk_id) {
      auto image = encode_delta(*schema, updates, tail.addr);
      if (!image.ok()) return image.status();
      auto hdr = parse_delta_header(image->bytes);
      if (!hdr.ok()) return hdr.status();
      auto addr = log_.append_delta(std::move(image).value());
      if (!addr.ok()) {
        if (addr.code() == ErrorCode::kDLogFull) {
          force_rewrite = true;
          continue;
        }
        return addr.status();
      }
      delta = *addr;
      delta_chunk = tail_info->chunk_id;
      delta_header = std::move(hdr).value();
      delta_prev = tail.addr;
    } else if (delta_prev != tail.addr) {
      FOCUS_RETURN_IF_ERROR(log_.rewrite_chain_pointer(delta, delta_header, tail.addr));
      delta_prev = tail.addr;
    }

    const std::uint32_t chain_len = tail.chain_len + 1;
    const std::uint64_t fresh = log_word(delta, chain_len);
    const std::uint64_t observed = w;
    if (entry->compare_exchange(w, fresh)) {
      after_swap(entry, observed, fresh, &updates);
      if (chain_len >= options_.merge_min_chain) enqueue_merge(entry);
      partial_updates_.add();
      return Status::OK();
    }
    cas_retries_.add();
  }
}

Result<FieldValues> SwimEngine::read_entry(GlobalIndex::Entry* entry, const SchemaDef& schema,
                                           const FieldIdSet& fields, ReadTrace* trace) {
  EpochManager::Guard guard(epochs_);
  const std::size_t stripe = stripe_of(entry->encoded_key());
  for (;;) {
    if (trace != nullptr) *trace = ReadTrace{};
    const std::uint64_t seq = seq_begin(stripe);
    const std::uint64_t w = entry->load();
    if (w == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
    if (trace != nullptr) {
      trace->entry = entry;
      trace->word = w;
    }
    if (is_cache_word(w)) {
      auto t = resolve(entry, w, schema);
      if (!t.ok()) return t.status();
      if (!t->has_value()) continue;
      FieldValues out;
      out.reserve(fields.size());
      for (FieldId id : fields) {
        if (id >= schema.field_count()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
        out.push_back((*t)->cached->values[id]);
      }
      if (trace != nullptr) trace->from_cache = true;
      return out;
    }
    auto values = read_chain(schema, unpack_index_value(w).loc.log_addr, &fields, trace);
    if (!seq_validate(stripe, seq)) continue;
    // A writer replaced the chain and retired the row we were reading.
    if (!values.ok() && entry->load() != w) continue;
    return values;
  }
}

Result<FieldValues> SwimEngine::read_partial(const HierKey& key, const FieldIdSet& fields, ReadTrace* trace) {
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  if (fields.empty()) return Status(ErrorCode::kEmptyFieldSet);
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return Status(ErrorCode::kKeyAbsent);
  return read_entry(entry, *schema, fields, trace);
}

Result<FieldValues> SwimEngine::read_full(const HierKey& key, ReadTrace* trace) {
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  FieldIdSet all(schema->field_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<FieldId>(i);
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return Status(ErrorCode::kKeyAbsent);
  return read_entry(entry, *schema, all, trace);
}

Result<FieldValues> SwimEngine::read_log_row(const SchemaDef& schema, LogAddr tail) {
  EpochManager::Guard guard(epochs_);
  return read_chain(schema, tail, nullptr, nullptr);
}

Status SwimEngine::del(const HierKey& key) {
  EpochManager::Guard guard(epochs_);
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return Status::OK();
  for (;;) {
    const std::uint64_t w = entry->load();
    if (w == kAbsentWord) return Status::OK();
    auto t = resolve(entry, w, *schema);
    if (!t.ok()) return t.status();
    if (!t->has_value()) continue;
    if (index_.remove_entry(entry, w)) {
      FOCUS_RETURN_IF_ERROR(invalidate_chain((*t)->addr));
      after_swap(entry, w, kAbsentWord, nullptr);
      return Status::OK();
    }
    cas_retries_.add();
  }
}

Result<std::size_t> SwimEngine::cacheline_flush(const std::vector<MergeItem>& mlist) {
  for (std::size_t i = 0; i < mlist.size(); ++i) {
    if (mlist[i].size == 0) return Status(ErrorCode::kInvalidArgument, "merge item of size 0");
    if (i > 0 && mlist[i].addr < mlist[i - 1].addr) return Status(ErrorCode::kUnsortedInput);
  }
  std::size_t flushes = 0;
  bool any = false;
  LogAddr flush_point = 0;  // last line flushed
  for (const MergeItem& item : mlist) {
    const LogAddr first = align_down(item.addr, kCacheLineSize);
    const LogAddr last = align_down(item.addr + item.size - 1, kCacheLineSize);
    for (LogAddr line = first; line <= last; line += kCacheLineSize) {
      if (any && line <= flush_point) continue;
      FOCUS_RETURN_IF_ERROR(backend_.flush(line));
      flush_point = line;
      any = true;
      ++flushes;
    }
  }
  backend_.fence();
  return flushes;
}

Result<MergeOutcome> SwimEngine::merge_chain(const HierKey& key) {
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr || entry->load() == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
  return merge_entry(entry);
}

Result<MergeOutcome> SwimEngine::merge_entry(GlobalIndex::Entry* entry) {
  EpochManager::Guard guard(epochs_);
  const std::size_t stripe = stripe_of(entry->encoded_key());
  std::lock_guard latch(key_latch_[stripe]);

  std::uint64_t w = entry->load();
  if (w == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
  if (is_cache_word(w)) {
    merges_deferred_.add();
    return MergeOutcome::kDeferred;
  }
  const IndexValue iv = unpack_index_value(w);
  if (iv.chain_len == 0) return MergeOutcome::kMerged;
  const HierKey key = entry->key();
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;

  // Newest value per field, tail first. Fixed fields keep their bytes; variable fields keep their 12-byte head.
  std::map<FieldId, std::string> latest;
  std::vector<std::pair<LogAddr, DeltaHeader>> deltas;
  bool rewrite = false;
  LogAddr addr = iv.loc.log_addr;
  for (int depth = 0;; ++depth) {
    if (depth > kMaxWalk) return Status(ErrorCode::kCorruptHeader, "chain does not terminate");
    auto info = log_.locate(addr);
    if (!info.ok()) return info.status();
    if (info->kind == ExtentKind::kCLog) break;
    auto hdr = log_.read_delta_header(addr);
    if (!hdr.ok()) return hdr.status();
    const RowReader reader = [&](std::size_t off, std::size_t len) { return backend_.read(addr + off, len); };
    auto locs = locate_delta_fields(*schema, *hdr, reader);
    if (!locs.ok()) return locs.status();
    for (const DeltaFieldLoc& loc : *locs) {
      if (latest.count(loc.id) != 0) continue;
      const bool fixed = schema->fields[loc.id].kind == FieldKind::kFixed;
      auto bytes = backend_.read(addr + loc.offset, fixed ? loc.length : kVarHeadSize);
      if (!bytes.ok()) return bytes.status();
      if (!fixed && !parse_var_head(*bytes).is_inline()) rewrite = true;
      latest.emplace(loc.id, std::move(bytes).value());
    }
    const LogAddr prev = hdr->chain_pointer;
    deltas.emplace_back(addr, std::move(hdr).value());
    addr = prev;
  }
  const LogAddr head = addr;
  auto head_info = log_.locate(head);
  if (!head_info.ok()) return head_info.status();
  if (log_.gc_active(head_info->chunk_id)) {
    merges_deferred_.add();
    return MergeOutcome::kDeferred;
  }
  auto h = log_.read_complete_header(head);
  if (!h.ok()) return h.status();

  std::vector<MergeItem> mlist;
  std::vector<std::string_view> payloads;
  for (const auto& [id, bytes] : latest) {
    auto slice = schema->field_slice(id);
    if (!slice.ok()) return slice.status();
    const LogAddr dst = head + h->fixed_base() + slice->offset;
    if (slice->kind == FieldKind::kVariable) {
      auto cur = backend_.read(dst, kVarHeadSize);
      if (!cur.ok()) return cur.status();
      if (!parse_var_head(*cur).is_inline()) rewrite = true;
    }
    mlist.push_back({dst, bytes.size()});
    payloads.push_back(bytes);
  }

  if (rewrite) {
    bool swapped = false;
    FOCUS_RETURN_IF_ERROR(rewrite_entry(entry, *schema, nullptr, w, &swapped));
    if (swapped) {
      merges_rewritten_.add();
      return MergeOutcome::kRewritten;
    }
    merges_deferred_.add();
    return MergeOutcome::kDeferred;
  }

  auto& seq = merge_seq_[stripe].seq;
  seq.fetch_add(1, std::memory_order_acq_rel);
  Status st;
  for (std::size_t i = 0; i < mlist.size() && st.ok(); ++i) st = backend_.write_at(mlist[i].addr, payloads[i]);
  if (st.ok()) {
    auto flushed = cacheline_flush(mlist);
    if (!flushed.ok()) st = flushed.status();
  }
  seq.fetch_add(1, std::memory_order_release);
  FOCUS_RETURN_IF_ERROR(st);

  std::set<LogAddr> lines;
  for (const auto& d : deltas) {
    auto prior = backend_.fetch_or_u16(d.first, kMergedBit);
    if (!prior.ok()) return prior.status();
    lines.insert(align_down(d.first, kCacheLineSize));
  }
  for (LogAddr line : lines) FOCUS_RETURN_IF_ERROR(backend_.flush(line));
  backend_.fence();

  if (entry->compare_exchange(w, log_word(head, 0))) {
    merges_.add();
    return MergeOutcome::kMerged;
  }
  merges_deferred_.add();
  return MergeOutcome::kDeferred;
}

Status SwimEngine::restore_rewrite(const HierKey& key) {
  EpochManager::Guard guard(epochs_);
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return Status(ErrorCode::kKeyAbsent);
  for (;;) {
    bool swapped = false;
    {
      auto held = latch(*entry);
      FOCUS_RETURN_IF_ERROR(rewrite_entry(entry, *schema, nullptr, std::nullopt, &swapped));
    }
    if (swapped) {
      restore_rewrites_.add();
      return Status::OK();
    }
    cas_retries_.add();
  }
}

Result<ChainView> SwimEngine::chain_view(const HierKey& key) {
  EpochManager::Guard guard(epochs_);
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return Status(ErrorCode::kKeyAbsent);
  std::optional<Tail> tail;
  while (!tail) {
    const std::uint64_t w = entry->load();
    if (w == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
    auto t = resolve(entry, w, *schema);
    if (!t.ok()) return t.status();
    tail = std::move(t).value();
  }
  ChainView view;
  view.tail_addr = tail->addr;
  LogAddr addr = tail->addr;
  for (int depth = 0;; ++depth) {
    if (depth > kMaxWalk) return Status(ErrorCode::kCorruptHeader, "chain does not terminate");
    auto row = log_.read_row(addr, *schema);
    if (!row.ok()) return row.status();
    if (std::holds_alternative<CompleteRowImage>(*row)) {
      view.head_addr = addr;
      view.rows.push_back(std::move(row).value());
      break;
    }
    auto hdr = parse_delta_header(std::get<DeltaRowImage>(*row).bytes);
    if (!hdr.ok()) return hdr.status();
    view.rows.push_back(std::move(row).value());
    addr = hdr->chain_pointer;
  }
  return view;
}

Result<std::size_t> SwimEngine::relocate(LogAddr head, const HierKey& key) {
  Status err;
  const SchemaDef* schema = schema_for(key, &err);
  if (schema == nullptr) return err;
  std::lock_guard latch(key_latch_[stripe_of(key.encode())]);
  EpochManager::Guard guard(epochs_);
  GlobalIndex::Entry* entry = index_.find(key);
  if (entry == nullptr) return std::size_t{0};
  for (;;) {
    std::uint64_t w = entry->load();
    if (w == kAbsentWord) return std::size_t{0};
    auto t = resolve(entry, w, *schema);
    if (!t.ok()) return t.status();
    if (!t->has_value()) continue;
    Tail& tail = **t;
    auto current_head = head_of(tail.addr);
    if (!current_head.ok()) return current_head.status();
    if (*current_head != head) return std::size_t{0};

    FieldValues values;
    if (tail.cached) {
      values = std::move(tail.cached->values);
    } else {
      auto v = read_chain(*schema, tail.addr, nullptr, nullptr);
      if (!v.ok()) return v.status();
      values = std::move(v).value();
    }
    auto image = encode_complete(*schema, key, values);
    if (!image.ok()) return image.status();
    const std::size_t size = image->bytes.size();
    auto addr = log_.append_complete(std::move(image).value());
    if (!addr.ok()) return addr.status();
    const std::uint64_t fresh = log_word(*addr, 0);
    const std::uint64_t observed = w;
    if (entry->compare_exchange(w, fresh)) {
      FOCUS_RETURN_IF_ERROR(log_.mark_invalid(head));
      after_swap(entry, observed, fresh, nullptr);
      relocated_rows_.add();
      return size;
    }
    FOCUS_RETURN_IF_ERROR(log_.mark_invalid(*addr));
    cas_retries_.add();
  }
}

Result<std::uint64_t> SwimEngine::gc_chunk(std::uint32_t chunk_id) {
  std::lock_guard lock(gc_mu_);
  auto reclaimed = log_.gc_chunk(chunk_id, *this);
  if (!reclaimed.ok()) return reclaimed.status();
  gc_runs_.add();
  gc_reclaimed_.add(*reclaimed);
  return reclaimed;
}

Result<std::uint64_t> SwimEngine::run_gc() {
  std::uint64_t total = 0;
  for (std::uint32_t id : log_.gc_candidates()) {
    auto r = gc_chunk(id);
    if (!r.ok()) {
      if (r.code() == ErrorCode::kChunkBusy) continue;
      return r.status();
    }
    total += *r;
  }
  return total;
}

void SwimEngine::enqueue_merge(GlobalIndex::Entry* entry) {
  std::size_t depth = 0;
  {
    std::lock_guard lock(queue_mu_);
    if (merge_queue_.size() >= options_.merge_queue_depth) return;
    merge_queue_.push_back(entry);
    depth = merge_queue_.size();
  }
  if (options_.background && depth >= options_.merge_batch) queue_cv_.notify_one();
}

std::size_t SwimEngine::drain_merges() {
  std::deque<GlobalIndex::Entry*> batch;
  {
    std::lock_guard lock(queue_mu_);
    batch.swap(merge_queue_);
  }
  for (GlobalIndex::Entry* e : batch) (void)merge_entry(e);
  return batch.size();
}

void SwimEngine::worker_loop() {
  std::vector<GlobalIndex::Entry*> batch;
  for (;;) {
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait_for(lock, options_.worker_interval, [&] { return stop_ || !merge_queue_.empty(); });
      if (stop_) return;
      batch.clear();
      while (!merge_queue_.empty() && batch.size() < options_.merge_batch) {
        batch.push_back(merge_queue_.front());
        merge_queue_.pop_front();
      }
    }
    for (GlobalIndex::Entry* e : batch) (void)merge_entry(e);
    (void)run_gc();
    if (batch.empty()) std::this_thread::sleep_for(options_.worker_interval);
  }
}

SwimStats SwimEngine::stats() const {
  SwimStats s;
  s.full_puts = full_puts_.load();
  s.partial_updates = partial_updates_.load();
  s.restore_rewrites = restore_rewrites_.load();
  s.merges = merges_.load();
  s.merges_deferred = merges_deferred_.load();
  s.merges_rewritten = merges_rewritten_.load();
  s.cas_retries = cas_retries_.load();
  s.relocated_rows = relocated_rows_.load();
  s.gc_runs = gc_runs_.load();
  s.gc_reclaimed_bytes = gc_reclaimed_.load();
  return s;
}

}  // namespace focus
