#include "focus/schema.hpp"

#include <algorithm>
#include <unordered_set>

namespace focus {

bool SchemaDef::has_variable_fields() const {
  return std::any_of(fields.begin(), fields.end(), [](const FieldDef& f) { return f.kind == FieldKind::kVariable; });
}

Result<FieldSlice> SchemaDef::field_slice(FieldId id) const {
  if (id >= fields.size()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
  const FieldDef& f = fields[id];
  if (f.kind == FieldKind::kFixed) return FieldSlice{fixed_offsets[id], f.size, FieldKind::kFixed};
  return FieldSlice{fixed_offsets[id], kVarHeadSize, FieldKind::kVariable};
}

Result<FieldId> SchemaDef::field_id(std::string_view field_name) const {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].name == field_name) return static_cast<FieldId>(i);
  }
  return Status(ErrorCode::kUnknownFieldName, std::string(field_name));
}

Result<SchemaDef> layout_schema(SchemaId id, std::string name, std::vector<FieldDef> fields) {
  if (fields.empty()) return Status(ErrorCode::kZeroFieldSchema, name);
  if (fields.size() > 0xFFFF) return Status(ErrorCode::kInvalidArgument, "too many fields");
  std::unordered_set<std::string> seen;
  SchemaDef s;
  s.schema_id = id;
  s.name = std::move(name);
  s.version = 1;
  std::uint64_t offset = 0;
  for (auto& f : fields) {
    if (f.name.empty()) return Status(ErrorCode::kInvalidArgument, "empty field name");
    if (!seen.insert(f.name).second) return Status(ErrorCode::kDuplicateFieldName, f.name);
    if (f.kind == FieldKind::kFixed && f.size == 0) return Status(ErrorCode::kZeroSizeFixedField, f.name);
    if (f.kind == FieldKind::kVariable) f.size = 0;
    s.fixed_offsets.push_back(static_cast<std::uint32_t>(offset));
    offset += f.kind == FieldKind::kFixed ? f.size : kVarHeadSize;
  }
  // kv_size is a 15-bit quantity; the fixed region alone has to fit.
  if (offset > 0x7FFF) return Status(ErrorCode::kValueTooLarge, "fixed region exceeds 32 KiB");
  s.fixed_region_size = static_cast<std::uint32_t>(offset);
  s.fields = std::move(fields);
  return s;
}

std::string encode_schema_record(const SchemaDef& schema) {
  std::string out;
  append_le<std::uint32_t>(out, schema.schema_id);
  append_le<std::uint32_t>(out, schema.version);
  append_le<std::uint16_t>(out, static_cast<std::uint16_t>(schema.name.size()));
  out += schema.name;
  append_le<std::uint16_t>(out, static_cast<std::uint16_t>(schema.fields.size()));
  for (const auto& f : schema.fields) {
    append_le<std::uint16_t>(out, static_cast<std::uint16_t>(f.name.size()));
    out += f.name;
    out.push_back(static_cast<char>(f.kind));
    append_le<std::uint32_t>(out, f.size);
  }
  return out;
}

Result<SchemaDef> decode_schema_record(std::string_view& in) {
  auto need = [&](std::size_t n) { return in.size() >= n; };
  auto take = [&](std::size_t n) {
    std::string_view v = in.substr(0, n);
    in.remove_prefix(n);
    return v;
  };
  if (!need(10)) return Status(ErrorCode::kCorruptHeader, "schema record truncated");
  const auto id = load_le<std::uint32_t>(take(4).data());
  const auto version = load_le<std::uint32_t>(take(4).data());
  const auto name_len = load_le<std::uint16_t>(take(2).data());
  if (!need(name_len + 2u)) return Status(ErrorCode::kCorruptHeader, "schema name truncated");
  std::string name(take(name_len));
  const auto count = load_le<std::uint16_t>(take(2).data());
  std::vector<FieldDef> fields;
  fields.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (!need(2)) return Status(ErrorCode::kCorruptHeader, "field truncated");
    const auto len = load_le<std::uint16_t>(take(2).data());
    if (!need(len + 5u)) return Status(ErrorCode::kCorruptHeader, "field truncated");
    FieldDef f;
    f.name = std::string(take(len));
    const auto kind = static_cast<std::uint8_t>(take(1)[0]);
    if (kind > 1) return Status(ErrorCode::kCorruptHeader, "bad field kind");
    f.kind = static_cast<FieldKind>(kind);
    f.size = load_le<std::uint32_t>(take(4).data());
    fields.push_back(std::move(f));
  }
  auto s = layout_schema(id, std::move(name), std::move(fields));
  if (!s.ok()) return s.status();
  s->version = version;
  return s;
}

std::string HierKey::encode() const {
  std::string out(4, '\0');
  out[0] = static_cast<char>(schema_id >> 24);
  out[1] = static_cast<char>(schema_id >> 16);
  out[2] = static_cast<char>(schema_id >> 8);
  out[3] = static_cast<char>(schema_id);
  out += primary_key;
  return out;
}

Result<HierKey> HierKey::decode(std::string_view bytes) {
  if (bytes.size() < 4) return Status(ErrorCode::kCorruptHeader, "key shorter than schema prefix");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  HierKey k;
  k.schema_id = (SchemaId{p[0]} << 24) | (SchemaId{p[1]} << 16) | (SchemaId{p[2]} << 8) | SchemaId{p[3]};
  k.primary_key = std::string(bytes.substr(4));
  return k;
}

void SchemaRegistry::set_persist_hook(PersistHook hook) {
  std::lock_guard lock(mu_);
  persist_ = std::move(hook);
}

Status SchemaRegistry::install_locked(std::unique_ptr<SchemaDef> schema) {
  const SchemaId id = schema->schema_id;
  if (id == 0 || id >= kMaxSchemas) return Status(ErrorCode::kInvalidArgument, "schema id out of range");
  by_name_.emplace(schema->name, id);
  slots_[id].store(schema.get(), std::memory_order_release);
  owned_.push_back(std::move(schema));
  next_id_ = std::max(next_id_, id + 1);
  count_.fetch_add(1, std::memory_order_release);
  return Status::OK();
}

Result<const SchemaDef*> SchemaRegistry::create_schema(std::string name, std::vector<FieldDef> fields) {
  std::lock_guard lock(mu_);
  if (by_name_.contains(name)) return Status(ErrorCode::kDuplicateSchemaName, name);
  if (next_id_ >= kMaxSchemas) return Status(ErrorCode::kCapacityExhausted, "schema table full");
  auto laid = layout_schema(next_id_, std::move(name), std::move(fields));
  if (!laid.ok()) return laid.status();
  auto schema = std::make_unique<SchemaDef>(std::move(laid).value());
  if (persist_) FOCUS_RETURN_IF_ERROR(persist_(encode_schema_record(*schema)));
  const SchemaDef* raw = schema.get();
  FOCUS_RETURN_IF_ERROR(install_locked(std::move(schema)));
  return raw;
}

Status SchemaRegistry::restore(SchemaDef schema) {
  std::lock_guard lock(mu_);
  if (schema.schema_id < kMaxSchemas && slots_[schema.schema_id].load(std::memory_order_relaxed) != nullptr) {
    return Status(ErrorCode::kSchemaEvolution, "schema id already registered");
  }
  if (by_name_.contains(schema.name)) return Status(ErrorCode::kDuplicateSchemaName, schema.name);
  return install_locked(std::make_unique<SchemaDef>(std::move(schema)));
}

const SchemaDef* SchemaRegistry::get(SchemaId id) const {
  if (id >= kMaxSchemas) return nullptr;
  return slots_[id].load(std::memory_order_acquire);
}

const SchemaDef* SchemaRegistry::find(std::string_view name) const {
  std::lock_guard lock(mu_);
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : get(it->second);
}

Result<FieldIdSet> SchemaRegistry::resolve_fields(const SchemaDef& schema, const std::vector<std::string>& names) const {
  FieldIdSet ids;
  if (names.empty()) {
    ids.resize(schema.field_count());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<FieldId>(i);
    return ids;
  }
  for (const auto& n : names) {
    auto id = schema.field_id(n);
    if (!id.ok()) return id.status();
    ids.push_back(*id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace focus
