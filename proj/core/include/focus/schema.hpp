#pragma once

#include <array>
#include <atomic>
#include <compare>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "focus/status.hpp"
#include "focus/types.hpp"

namespace focus {

enum class FieldKind : std::uint8_t { kFixed = 0, kVariable = 1 };

/// Bytes a variable-length field occupies in the fixed region: [u16 type][u16 size][u64 payload].
inline constexpr std::uint32_t kVarHeadSize = 12;
/// Variable contents up to this many bytes live inside the head's payload slot.
inline constexpr std::uint32_t kInlineVarLimit = 8;

struct FieldDef {
  std::string name;
  FieldKind kind = FieldKind::kFixed;
  std::uint32_t size = 0;  // ignored for variable fields

  static FieldDef Fixed(std::string name, std::uint32_t size) { return {std::move(name), FieldKind::kFixed, size}; }
  static FieldDef Variable(std::string name) { return {std::move(name), FieldKind::kVariable, 0}; }

  bool operator==(const FieldDef&) const = default;
};

struct FieldSlice {
  std::uint32_t offset = 0;
  std::uint32_t length = 0;
  FieldKind kind = FieldKind::kFixed;

  bool operator==(const FieldSlice&) const = default;
};

/// Immutable schema: ordered fields plus their precomputed placement in the fixed region.
struct SchemaDef {
  SchemaId schema_id = 0;
  std::string name;
  std::uint32_t version = 1;
  std::vector<FieldDef> fields;
  std::vector<std::uint32_t> fixed_offsets;
  std::uint32_t fixed_region_size = 0;

  std::size_t field_count() const { return fields.size(); }
  bool has_variable_fields() const;

  Result<FieldSlice> field_slice(FieldId id) const;
  Result<FieldId> field_id(std::string_view field_name) const;
};

/// Computes offsets in declaration order and validates the field list.
Result<SchemaDef> layout_schema(SchemaId id, std::string name, std::vector<FieldDef> fields);

/// Persistent form: [u32 id][u32 version][u16 name_len][name][u16 n] then n x [u16 len][name][u8 kind][u32 size].
std::string encode_schema_record(const SchemaDef& schema);
/// Decodes one record from the front of `in`; advances `in` past it.
Result<SchemaDef> decode_schema_record(std::string_view& in);

/// Key of a hierarchical KV pair: the owning schema plus the record's primary key.
struct HierKey {
  SchemaId schema_id = 0;
  std::string primary_key;

  /// Order-preserving byte form: big-endian schema id followed by the primary key.
  std::string encode() const;
  static Result<HierKey> decode(std::string_view bytes);

  auto operator<=>(const HierKey&) const = default;
  bool operator==(const HierKey&) const = default;
};

using FieldIdSet = std::vector<FieldId>;  // sorted, unique

class SchemaRegistry {
 public:
  static constexpr std::size_t kMaxSchemas = 4096;

  /// Invoked under the registry's writer lock with the record to persist.
  using PersistHook = std::function<Status(const std::string& record)>;

  SchemaRegistry() = default;
  SchemaRegistry(const SchemaRegistry&) = delete;
  SchemaRegistry& operator=(const SchemaRegistry&) = delete;

  void set_persist_hook(PersistHook hook);

  Result<const SchemaDef*> create_schema(std::string name, std::vector<FieldDef> fields);

  /// Re-registers a schema loaded from persistent storage, keeping its id.
  Status restore(SchemaDef schema);

  /// Wait-free. Returned pointers stay valid for the registry's lifetime.
  const SchemaDef* get(SchemaId id) const;
  const SchemaDef* find(std::string_view name) const;

  /// Empty `names` selects every field.
  Result<FieldIdSet> resolve_fields(const SchemaDef& schema, const std::vector<std::string>& names) const;

  std::size_t size() const { return count_.load(std::memory_order_acquire); }

 private:
  Status install_locked(std::unique_ptr<SchemaDef> schema);

  mutable std::mutex mu_;
  PersistHook persist_;
  std::vector<std::unique_ptr<SchemaDef>> owned_;
  std::unordered_map<std::string, SchemaId> by_name_;
  std::array<std::atomic<const SchemaDef*>, kMaxSchemas> slots_{};
  std::atomic<std::size_t> count_{0};
  SchemaId next_id_ = 1;
};

}  // namespace focus
