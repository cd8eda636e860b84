#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "focus/schema.hpp"
#include "focus/status.hpp"
#include "focus/types.hpp"

namespace focus {

/// One value per schema field, indexed by field id.
using FieldValues = std::vector<std::string>;
/// A subset of fields; encode_delta sorts it.
using FieldUpdates = std::vector<std::pair<FieldId, std::string>>;

// Complete row: [u16 kv_size | invalid<<15][u16 key_len][key][fixed region][var region]
inline constexpr std::size_t kCompleteHeaderSize = 4;
inline constexpr std::uint16_t kInvalidBit = 0x8000;
inline constexpr std::uint32_t kMaxKvSize = 0x7FFF;

// Delta row: [u16 meta_size | merged<<15][u16 count][u16 x count][u64 chain_pointer][payload]
inline constexpr std::uint16_t kMergedBit = 0x8000;
inline constexpr std::size_t kChainPointerSize = 8;

/// Bytes of a complete row, with `base` the absolute address of bytes[0].
struct CompleteRowImage {
  LogAddr base = 0;
  std::string bytes;
  bool operator==(const CompleteRowImage&) const = default;
};

struct DeltaRowImage {
  LogAddr base = 0;
  std::string bytes;
  bool operator==(const DeltaRowImage&) const = default;
};

using RowImage = std::variant<CompleteRowImage, DeltaRowImage>;

struct CompleteHeader {
  std::uint16_t kv_size = 0;
  bool invalid = false;
  std::uint16_t key_len = 0;

  std::size_t row_size() const { return kCompleteHeaderSize + key_len + kv_size; }
  std::size_t fixed_base() const { return kCompleteHeaderSize + key_len; }
};

struct DeltaHeader {
  std::uint16_t meta_size = 0;
  bool merged = false;
  std::vector<FieldId> field_ids;
  LogAddr chain_pointer = kNullAddr;

  std::size_t chain_pointer_offset() const { return 4 + 2 * field_ids.size(); }
};

/// Position of one field's record inside a delta row, relative to the row start.
struct DeltaFieldLoc {
  FieldId id = 0;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;  // fixed: size; variable: 12-byte head + out-of-line content
};

constexpr std::size_t delta_meta_size(std::size_t field_count) { return 4 + 2 * field_count + kChainPointerSize; }

CompleteHeader parse_complete_header(std::string_view first4);
/// Parses the metadata portion; `bytes` must hold at least meta_size bytes.
Result<DeltaHeader> parse_delta_header(std::string_view bytes);

Result<CompleteRowImage> encode_complete(const SchemaDef& schema, const HierKey& key, const FieldValues& values,
                                         LogAddr base = 0);
Result<FieldValues> decode_complete(const CompleteRowImage& image, const SchemaDef& schema);
/// Rewrites out-of-line pointers so the image is valid at `new_base`.
Status rebase_complete(CompleteRowImage& image, const SchemaDef& schema, LogAddr new_base);
/// Key stored in the row header.
Result<HierKey> complete_row_key(std::string_view bytes);

Result<DeltaRowImage> encode_delta(const SchemaDef& schema, FieldUpdates updates, LogAddr prev, LogAddr base = 0);
Status rebase_delta(DeltaRowImage& image, const SchemaDef& schema, LogAddr new_base);

/// Reads `len` bytes at `offset` from the start of a delta row.
using RowReader = std::function<Result<std::string>(std::size_t offset, std::size_t len)>;

/// Locates every payload field of a delta row. Variable heads are read through `read`.
Result<std::vector<DeltaFieldLoc>> locate_delta_fields(const SchemaDef& schema, const DeltaHeader& header,
                                                       const RowReader& read);
Result<std::size_t> delta_row_size(const SchemaDef& schema, const DeltaHeader& header, const RowReader& read);

/// Field bytes from either row kind; nullopt when a delta does not carry the field.
Result<std::optional<std::string>> extract_field(const RowImage& image, const SchemaDef& schema, FieldId id);
Result<std::optional<std::string>> extract_field(const CompleteRowImage& image, const SchemaDef& schema, FieldId id);
Result<std::optional<std::string>> extract_field(const DeltaRowImage& image, const SchemaDef& schema, FieldId id);

/// Decodes a 12-byte variable head; returns (size, payload-or-address).
struct VarHead {
  std::uint16_t type = 0;
  std::uint16_t size = 0;
  std::uint64_t payload = 0;

  bool is_inline() const { return size <= kInlineVarLimit; }
  std::string inline_bytes() const;
};
VarHead parse_var_head(std::string_view head12);
std::string make_var_head(std::string_view content, LogAddr out_of_line_addr);

}  // namespace focus
