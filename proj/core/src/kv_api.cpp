#include "focus/kv_api.hpp"

#include <algorithm>

namespace focus {

namespace {

Result<FieldIdSet> ids_for(const SchemaRegistry& registry, const SchemaDef& schema, const std::vector<std::string>& names) {
  return registry.resolve_fields(schema, names);
}

FieldMap to_map(const SchemaDef& schema, const FieldIdSet& ids, FieldValues values) {
  FieldMap out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(schema.fields[ids[i]].name, std::move(values[i]));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Focus

Result<std::unique_ptr<Focus>> Focus::open(const FocusOptions& options) {
  auto backend = PmemBackend::open(options.pmem);
  if (!backend.ok()) return backend.status();
  return open_backend(std::move(backend).value(), options);
}

Result<std::unique_ptr<Focus>> Focus::open_backend(std::unique_ptr<PmemBackend> backend, const FocusOptions& options) {
  std::unique_ptr<Focus> store(new Focus());
  store->backend_ = std::move(backend);
  FOCUS_RETURN_IF_ERROR(store->init(options));
  return store;
}

Status Focus::init(const FocusOptions& options) {
  options_ = options;
  registry_ = std::make_unique<SchemaRegistry>();
  auto log = Plog::open(*backend_, *registry_, options.plog);
  if (!log.ok()) return log.status();
  log_ = std::move(log).value();
  index_ = std::make_unique<GlobalIndex>();
  engine_ = std::make_unique<SwimEngine>(*log_, *index_, *registry_, options.swim);
  FOCUS_RETURN_IF_ERROR(engine_->rebuild_index());
  if (options.cache_enabled) {
    SwimEngine* engine = engine_.get();
    cache_ = std::make_unique<SeaCache>(
        *index_, *registry_,
        [engine](const SchemaDef& schema, LogAddr tail) { return engine->read_log_row(schema, tail); }, options.cache,
        options.clock);
    cache_->set_admit_guard([engine](const GlobalIndex::Entry& e) { return engine->latch(e); });
    engine_->set_cache(cache_.get());
  }
  flush_base_ = backend_->stats();
  return Status::OK();
}

Focus::~Focus() {
  // The engine worker may still hand slots back to the cache; stop it first.
  if (engine_) engine_->stop_background();
  cache_.reset();
}

void Focus::account(std::uint64_t subops, const IoTally& before) {
  const IoTally& now = thread_io_tally();
  ops_.add();
  subops_.add(subops);
  bytes_.add((now.bytes_read - before.bytes_read) + (now.bytes_written - before.bytes_written));
}

Result<SchemaId> Focus::create_schema(const std::string& name, const std::vector<FieldDef>& fields) {
  auto s = registry_->create_schema(name, fields);
  if (!s.ok()) return s.status();
  return (*s)->schema_id;
}

Status Focus::put_values(const HierKey& key, const FieldValues& values) {
  const IoTally before = thread_io_tally();
  Status st = engine_->put_full(key, values);
  account(1, before);
  return st;
}

Status Focus::update_values(const HierKey& key, FieldUpdates updates) {
  const IoTally before = thread_io_tally();
  const SchemaDef* schema = registry_->get(key.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  Status st;
  std::vector<bool> seen(schema->field_count(), false);
  std::size_t distinct = 0;
  for (const auto& u : updates) {
    if (u.first < seen.size() && !seen[u.first]) {
      seen[u.first] = true;
      ++distinct;
    }
  }
  if (distinct == schema->field_count() && distinct > 0) {
    // Every field given: a full write, but only for an existing key.
    if (!index_->get(key)) {
      st = Status(ErrorCode::kKeyAbsent);
    } else {
      FieldValues values(schema->field_count());
      for (auto& [id, bytes] : updates) values[id] = std::move(bytes);
      st = engine_->put_full(key, values);
    }
  } else {
    st = engine_->update_partial(key, std::move(updates));
  }
  account(1, before);
  return st;
}

Result<FieldValues> Focus::get_values(const HierKey& key, const FieldIdSet& fields, ReadTrace* trace) {
  const IoTally before = thread_io_tally();
  const SchemaDef* schema = registry_->get(key.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  FieldIdSet all;
  const FieldIdSet* want = &fields;
  if (fields.empty()) {
    all.resize(schema->field_count());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<FieldId>(i);
    want = &all;
  }
  GlobalIndex::Entry* entry = index_->find(key);
  if (entry == nullptr) {
    account(1, before);
    return Status(ErrorCode::kKeyAbsent);
  }
  ReadTrace local;
  ReadTrace& t = trace != nullptr ? *trace : local;
  auto values = engine_->read_entry(entry, *schema, *want, &t);
  if (values.ok() && cache_) {
    if (t.from_cache) {
      cache_->on_hit(schema->schema_id, t.word);
    } else {
      cache_->on_miss(schema->schema_id, entry, t.word);
    }
  }
  account(1, before);
  return values;
}

Result<std::vector<std::pair<HierKey, FieldValues>>> Focus::scan_values(const HierKey& start, const FieldIdSet& fields,
                                                                        std::size_t count) {
  const IoTally before = thread_io_tally();
  const SchemaDef* schema = registry_->get(start.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(start.schema_id));
  FieldIdSet all;
  const FieldIdSet* want = &fields;
  if (fields.empty()) {
    all.resize(schema->field_count());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<FieldId>(i);
    want = &all;
  }
  std::vector<std::pair<HierKey, FieldValues>> out;
  GlobalIndex::Iterator it(*index_);
  for (it.seek(start); it.valid() && out.size() < count; it.next()) {
    GlobalIndex::Entry* e = it.entry();
    HierKey k = e->key();
    if (k.schema_id != start.schema_id) break;
    auto values = engine_->read_entry(e, *schema, *want);
    if (!values.ok()) {
      if (values.code() == ErrorCode::kKeyAbsent) continue;  // deleted under us
      account(1, before);
      return values.status();
    }
    out.emplace_back(std::move(k), std::move(values).value());
  }
  account(1, before);
  return out;
}

Status Focus::put(const HierKey& key, const FieldMap& value) {
  const SchemaDef* schema = registry_->get(key.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  FieldValues values(schema->field_count());
  std::vector<bool> seen(schema->field_count(), false);
  for (const auto& [name, bytes] : value) {
    auto id = schema->field_id(name);
    if (!id.ok()) return id.status();
    values[*id] = bytes;
    seen[*id] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) return Status(ErrorCode::kMissingFieldValue, schema->fields[i].name);
  }
  return put_values(key, values);
}

Status Focus::update(const HierKey& key, const FieldMap& fields) {
  const SchemaDef* schema = registry_->get(key.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  if (fields.empty()) return Status(ErrorCode::kEmptyFieldSet);
  FieldUpdates updates;
  for (const auto& [name, bytes] : fields) {
    auto id = schema->field_id(name);
    if (!id.ok()) return id.status();
    updates.emplace_back(*id, bytes);
  }
  return update_values(key, std::move(updates));
}

Result<FieldMap> Focus::get(const HierKey& key, const std::vector<std::string>& fields) {
  const SchemaDef* schema = registry_->get(key.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  auto ids = ids_for(*registry_, *schema, fields);
  if (!ids.ok()) return ids.status();
  auto values = get_values(key, *ids);
  if (!values.ok()) return values.status();
  return to_map(*schema, *ids, std::move(values).value());
}

Result<std::vector<ScanRow>> Focus::scan(const HierKey& start, const std::vector<std::string>& fields,
                                         std::size_t count) {
  const SchemaDef* schema = registry_->get(start.schema_id);
  if (schema == nullptr) return Status(ErrorCode::kUnknownSchema, std::to_string(start.schema_id));
  auto ids = ids_for(*registry_, *schema, fields);
  if (!ids.ok()) return ids.status();
  auto rows = scan_values(start, *ids, count);
  if (!rows.ok()) return rows.status();
  std::vector<ScanRow> out;
  out.reserve(rows->size());
  for (auto& [k, v] : *rows) out.emplace_back(std::move(k), to_map(*schema, *ids, std::move(v)));
  return out;
}

Status Focus::del(const HierKey& key) {
  const IoTally before = thread_io_tally();
  Status st = engine_->del(key);
  account(1, before);
  return st;
}

AccessStats Focus::access_stats() const { return {ops_.load(), subops_.load(), bytes_.load()}; }

StoreStats Focus::stats() const {
  StoreStats s;
  s.ops = ops_.load();
  s.kv_suboperations = subops_.load();
  s.bytes_touched = bytes_.load();
  const FlushStats f = backend_->stats() - flush_base_;
  s.cacheline_flushes = f.cacheline_flushes;
  s.fences = f.fences;
  s.bytes_written = f.bytes_written;
  s.bytes_read = f.bytes_read;
  s.reads_256b_rounded = f.reads_256b_rounded;
  if (cache_) {
    const SeaCacheStats c = cache_->stats();
    s.cache_hits = c.hits;
    s.cache_misses = c.misses;
    s.cache_probes = c.probes;
    s.hit_ratio = c.hits + c.misses == 0 ? 0.0 : static_cast<double>(c.hits) / (c.hits + c.misses);
  }
  const SwimStats w = engine_->stats();
  s.restore_rewrites = w.restore_rewrites;
  s.merges = w.merges;
  s.gc_reclaimed_bytes = w.gc_reclaimed_bytes;
  return s;
}

void Focus::reset_stats() {
  ops_.reset();
  subops_.reset();
  bytes_.reset();
  flush_base_ = backend_->stats();
  if (cache_) cache_->reset_counters();
}

// ---------------------------------------------------------------------------------------------
// Mapping baselines

std::string serialize_record(const SchemaDef& schema, const FieldMap& record) {
  std::string out;
  for (const FieldDef& f : schema.fields) {
    auto it = record.find(f.name);
    const std::string_view v = it == record.end() ? std::string_view() : std::string_view(it->second);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
    out.append(v);
  }
  return out;
}

Result<FieldMap> deserialize_record(const SchemaDef& schema, std::string_view blob) {
  FieldMap out;
  for (const FieldDef& f : schema.fields) {
    if (blob.size() < 4) return Status(ErrorCode::kCorruptHeader, "record blob truncated");
    const auto len = load_le<std::uint32_t>(blob.data());
    blob.remove_prefix(4);
    if (blob.size() < len) return Status(ErrorCode::kCorruptHeader, "record blob truncated");
    out.emplace(f.name, std::string(blob.substr(0, len)));
    blob.remove_prefix(len);
  }
  return out;
}

MappedStore::MappedStore(Mapping mapping, std::unique_ptr<Focus> base, SchemaId flat)
    : mapping_(mapping), base_(std::move(base)), flat_(flat) {}

Result<std::unique_ptr<MappedStore>> MappedStore::open(Mapping mapping, const FocusOptions& options) {
  auto base = Focus::open(options);
  if (!base.ok()) return base.status();
  SchemaId flat = 0;
  if (const SchemaDef* existing = (*base)->registry().find(kFlatSchema)) {
    flat = existing->schema_id;
  } else {
    auto id = (*base)->create_schema(kFlatSchema, {FieldDef::Variable(kFlatField)});
    if (!id.ok()) return id.status();
    flat = *id;
  }
  return std::unique_ptr<MappedStore>(new MappedStore(mapping, std::move(base).value(), flat));
}

void MappedStore::account(std::uint64_t subops, const IoTally& before) {
  const IoTally& now = thread_io_tally();
  ops_.add();
  subops_.add(subops);
  bytes_.add((now.bytes_read - before.bytes_read) + (now.bytes_written - before.bytes_written));
}

Result<SchemaId> MappedStore::create_schema(const std::string& name, const std::vector<FieldDef>& fields) {
  auto s = logical_.create_schema(name, fields);
  if (!s.ok()) return s.status();
  return (*s)->schema_id;
}

const SchemaDef* MappedStore::logical(const HierKey& key, Status* err) const {
  const SchemaDef* s = logical_.get(key.schema_id);
  if (s == nullptr) *err = Status(ErrorCode::kUnknownSchema, std::to_string(key.schema_id));
  return s;
}

HierKey MappedStore::flat_key(const HierKey& key) const { return HierKey{flat_, key.encode()}; }

HierKey MappedStore::attr_key(const HierKey& key, const std::string& attr) const {
  return HierKey{flat_, key.encode() + "/" + attr};
}

Result<FieldMap> MappedStore::load_blob(const HierKey& key, const SchemaDef& schema) {
  auto v = base_->get_values(flat_key(key), {0});
  if (!v.ok()) return v.status();
  return deserialize_record(schema, (*v)[0]);
}

Status MappedStore::store_blob(const HierKey& key, const SchemaDef& schema, const FieldMap& record) {
  return base_->put_values(flat_key(key), {serialize_record(schema, record)});
}

Status MappedStore::put(const HierKey& key, const FieldMap& value) {
  Status err;
  const SchemaDef* schema = logical(key, &err);
  if (schema == nullptr) return err;
  for (const auto& [name, bytes] : value) {
    auto id = schema->field_id(name);
    if (!id.ok()) return id.status();
    const FieldDef& f = schema->fields[*id];
    if (f.kind == FieldKind::kFixed && bytes.size() != f.size) return Status(ErrorCode::kFixedSizeMismatch, name);
  }
  for (const FieldDef& f : schema->fields) {
    if (value.count(f.name) == 0) return Status(ErrorCode::kMissingFieldValue, f.name);
  }
  const IoTally before = thread_io_tally();
  Status st;
  std::uint64_t subops = 0;
  if (mapping_ == Mapping::kConsolidated) {
    st = store_blob(key, *schema, value);
    subops = 1;
  } else {
    for (const FieldDef& f : schema->fields) {
      ++subops;
      st = base_->put_values(attr_key(key, f.name), {value.at(f.name)});
      if (!st.ok()) break;
    }
  }
  account(subops, before);
  return st;
}

Status MappedStore::update(const HierKey& key, const FieldMap& fields) {
  Status err;
  const SchemaDef* schema = logical(key, &err);
  if (schema == nullptr) return err;
  if (fields.empty()) return Status(ErrorCode::kEmptyFieldSet);
  for (const auto& [name, bytes] : fields) {
    auto id = schema->field_id(name);
    if (!id.ok()) return id.status();
    const FieldDef& f = schema->fields[*id];
    if (f.kind == FieldKind::kFixed && bytes.size() != f.size) return Status(ErrorCode::kFixedSizeMismatch, name);
  }
  const IoTally before = thread_io_tally();
  Status st;
  std::uint64_t subops = 0;
  if (mapping_ == Mapping::kConsolidated) {
    // Read-modify-write of the whole blob.
    auto record = load_blob(key, *schema);
    ++subops;
    if (!record.ok()) {
      st = record.status();
    } else {
      for (const auto& [name, bytes] : fields) (*record)[name] = bytes;
      st = store_blob(key, *schema, *record);
      ++subops;
    }
  } else {
    if (!base_->index().get(attr_key(key, schema->fields[0].name))) {
      st = Status(ErrorCode::kKeyAbsent);
    } else {
      for (const auto& [name, bytes] : fields) {
        ++subops;
        st = base_->put_values(attr_key(key, name), {bytes});
        if (!st.ok()) break;
      }
    }
  }
  account(subops, before);
  return st;
}

Result<FieldMap> MappedStore::get(const HierKey& key, const std::vector<std::string>& fields) {
  Status err;
  const SchemaDef* schema = logical(key, &err);
  if (schema == nullptr) return err;
  auto ids = logical_.resolve_fields(*schema, fields);
  if (!ids.ok()) return ids.status();
  const IoTally before = thread_io_tally();
  FieldMap out;
  std::uint64_t subops = 0;
  Status st;
  if (mapping_ == Mapping::kConsolidated) {
    auto record = load_blob(key, *schema);
    subops = 1;
    if (!record.ok()) {
      st = record.status();
    } else {
      for (FieldId id : *ids) out[schema->fields[id].name] = std::move((*record)[schema->fields[id].name]);
    }
  } else {
    for (FieldId id : *ids) {
      ++subops;
      auto v = base_->get_values(attr_key(key, schema->fields[id].name), {0});
      if (!v.ok()) {
        st = v.status();
        break;
      }
      out[schema->fields[id].name] = std::move((*v)[0]);
    }
  }
  account(subops, before);
  if (!st.ok()) return st;
  return out;
}

Result<std::vector<ScanRow>> MappedStore::scan(const HierKey& start, const std::vector<std::string>& fields,
                                               std::size_t count) {
  Status err;
  const SchemaDef* schema = logical(start, &err);
  if (schema == nullptr) return err;
  auto ids = logical_.resolve_fields(*schema, fields);
  if (!ids.ok()) return ids.status();
  const IoTally before = thread_io_tally();
  std::vector<ScanRow> out;
  if (count == 0) {
    account(1, before);
    return out;
  }
  const std::size_t per_record = mapping_ == Mapping::kConsolidated ? 1 : schema->field_count();
  // One range command over the flat keyspace; every KV it covers is read whole.
  auto rows = base_->scan_values(flat_key(start), {0}, count * per_record);
  if (!rows.ok()) {
    account(1, before);
    return rows.status();
  }
  for (auto& [fk, v] : *rows) {
    std::string_view enc = fk.primary_key;
    std::string attr;
    if (mapping_ == Mapping::kScattered) {
      const auto slash = enc.rfind('/');
      if (slash == std::string_view::npos) continue;
      attr = std::string(enc.substr(slash + 1));
      enc = enc.substr(0, slash);
    }
    auto k = HierKey::decode(enc);
    if (!k.ok() || k->schema_id != start.schema_id) break;
    if (out.empty() || out.back().first != *k) {
      if (out.size() == count) break;
      out.emplace_back(*k, FieldMap{});
    }
    FieldMap& rec = out.back().second;
    if (mapping_ == Mapping::kConsolidated) {
      auto record = deserialize_record(*schema, v[0]);
      if (!record.ok()) return record.status();
      for (FieldId id : *ids) rec[schema->fields[id].name] = std::move((*record)[schema->fields[id].name]);
    } else {
      auto id = schema->field_id(attr);
      if (id.ok() && std::binary_search(ids->begin(), ids->end(), *id)) rec[attr] = std::move(v[0]);
    }
  }
  account(1, before);
  return out;
}

Status MappedStore::del(const HierKey& key) {
  Status err;
  const SchemaDef* schema = logical(key, &err);
  if (schema == nullptr) return err;
  const IoTally before = thread_io_tally();
  Status st;
  std::uint64_t subops = 0;
  if (mapping_ == Mapping::kConsolidated) {
    st = base_->engine().del(flat_key(key));
    subops = 1;
  } else {
    for (const FieldDef& f : schema->fields) {
      ++subops;
      st = base_->engine().del(attr_key(key, f.name));
      if (!st.ok()) break;
    }
  }
  account(subops, before);
  return st;
}

AccessStats MappedStore::access_stats() const { return {ops_.load(), subops_.load(), bytes_.load()}; }

StoreStats MappedStore::stats() const {
  StoreStats s = base_->stats();
  s.ops = ops_.load();
  s.kv_suboperations = subops_.load();
  s.bytes_touched = bytes_.load();
  return s;
}

void MappedStore::reset_stats() {
  ops_.reset();
  subops_.reset();
  bytes_.reset();
  base_->reset_stats();
}

}  // namespace focus
