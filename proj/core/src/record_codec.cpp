#include "focus/record_codec.hpp"

#include <algorithm>

namespace focus {

namespace {

Status check_value(const FieldDef& f, std::string_view v) {
  if (f.kind == FieldKind::kFixed) {
    if (v.size() != f.size) {
      return Status(ErrorCode::kFixedSizeMismatch,
                    f.name + ": expected " + std::to_string(f.size) + " got " + std::to_string(v.size()));
    }
  } else if (v.size() > 0xFFFF) {
    return Status(ErrorCode::kValueTooLarge, f.name);
  }
  return Status::OK();
}

// Returns the content of a variable field whose head lives in `row` at `head_off`.
Result<std::string> read_var(std::string_view row, LogAddr base, std::size_t head_off) {
  if (head_off + kVarHeadSize > row.size()) return Status(ErrorCode::kCorruptHeader, "var head out of bounds");
  VarHead h = parse_var_head(row.substr(head_off, kVarHeadSize));
  if (h.is_inline()) return h.inline_bytes();
  if (h.payload < base || h.payload - base + h.size > row.size()) {
    return Status(ErrorCode::kCorruptHeader, "var pointer outside row");
  }
  return std::string(row.substr(h.payload - base, h.size));
}

}  // namespace

std::string VarHead::inline_bytes() const {
  std::string out(size, '\0');
  std::memcpy(out.data(), &payload, size);
  return out;
}

VarHead parse_var_head(std::string_view head12) {
  VarHead h;
  h.type = load_le<std::uint16_t>(head12.data());
  h.size = load_le<std::uint16_t>(head12.data() + 2);
  h.payload = load_le<std::uint64_t>(head12.data() + 4);
  return h;
}

std::string make_var_head(std::string_view content, LogAddr out_of_line_addr) {
  std::string head(kVarHeadSize, '\0');
  store_le<std::uint16_t>(head.data(), 0);
  store_le<std::uint16_t>(head.data() + 2, static_cast<std::uint16_t>(content.size()));
  if (content.size() <= kInlineVarLimit) {
    std::memcpy(head.data() + 4, content.data(), content.size());
  } else {
    store_le<std::uint64_t>(head.data() + 4, out_of_line_addr);
  }
  return head;
}

CompleteHeader parse_complete_header(std::string_view first4) {
  CompleteHeader h;
  const auto word = load_le<std::uint16_t>(first4.data());
  h.kv_size = word & ~kInvalidBit;
  h.invalid = (word & kInvalidBit) != 0;
  h.key_len = load_le<std::uint16_t>(first4.data() + 2);
  return h;
}

Result<DeltaHeader> parse_delta_header(std::string_view bytes) {
  if (bytes.size() < 4) return Status(ErrorCode::kCorruptHeader, "delta header truncated");
  DeltaHeader h;
  const auto word = load_le<std::uint16_t>(bytes.data());
  h.meta_size = word & ~kMergedBit;
  h.merged = (word & kMergedBit) != 0;
  const auto count = load_le<std::uint16_t>(bytes.data() + 2);
  if (count == 0 || h.meta_size != delta_meta_size(count)) return Status(ErrorCode::kCorruptHeader, "bad delta meta");
  if (bytes.size() < h.meta_size) return Status(ErrorCode::kCorruptHeader, "delta meta truncated");
  h.field_ids.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    h.field_ids[i] = load_le<std::uint16_t>(bytes.data() + 4 + 2 * i);
    if (i > 0 && h.field_ids[i] <= h.field_ids[i - 1]) return Status(ErrorCode::kCorruptHeader, "field array order");
  }
  h.chain_pointer = load_le<std::uint64_t>(bytes.data() + 4 + 2 * count);
  return h;
}

Result<CompleteRowImage> encode_complete(const SchemaDef& schema, const HierKey& key, const FieldValues& values,
                                         LogAddr base) {
  if (values.size() < schema.field_count()) return Status(ErrorCode::kMissingFieldValue, schema.name);
  if (values.size() > schema.field_count()) return Status(ErrorCode::kFieldIdOutOfRange, "too many values");
  const std::string key_bytes = key.encode();
  if (key_bytes.size() > 0xFFFF) return Status(ErrorCode::kValueTooLarge, "key");

  std::size_t var_total = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    FOCUS_RETURN_IF_ERROR(check_value(schema.fields[i], values[i]));
    if (schema.fields[i].kind == FieldKind::kVariable && values[i].size() > kInlineVarLimit) var_total += values[i].size();
  }
  const std::size_t kv_size = schema.fixed_region_size + var_total;
  if (kv_size > kMaxKvSize) return Status(ErrorCode::kValueTooLarge, "kv_size " + std::to_string(kv_size));

  CompleteRowImage img;
  img.base = base;
  img.bytes.assign(kCompleteHeaderSize + key_bytes.size() + kv_size, '\0');
  char* p = img.bytes.data();
  store_le<std::uint16_t>(p, static_cast<std::uint16_t>(kv_size));
  store_le<std::uint16_t>(p + 2, static_cast<std::uint16_t>(key_bytes.size()));
  std::memcpy(p + 4, key_bytes.data(), key_bytes.size());
  const std::size_t fixed_base = kCompleteHeaderSize + key_bytes.size();
  std::size_t var_cursor = fixed_base + schema.fixed_region_size;
  for (std::size_t i = 0; i < values.size(); ++i) {
    char* slot = p + fixed_base + schema.fixed_offsets[i];
    const std::string& v = values[i];
    if (schema.fields[i].kind == FieldKind::kFixed) {
      std::memcpy(slot, v.data(), v.size());
      continue;
    }
    const std::string head = make_var_head(v, base + var_cursor);
    std::memcpy(slot, head.data(), head.size());
    if (v.size() > kInlineVarLimit) {
      std::memcpy(p + var_cursor, v.data(), v.size());
      var_cursor += v.size();
    }
  }
  return img;
}

Result<HierKey> complete_row_key(std::string_view bytes) {
  if (bytes.size() < kCompleteHeaderSize) return Status(ErrorCode::kCorruptHeader, "row truncated");
  const CompleteHeader h = parse_complete_header(bytes);
  if (bytes.size() < kCompleteHeaderSize + h.key_len) return Status(ErrorCode::kCorruptHeader, "key truncated");
  return HierKey::decode(bytes.substr(kCompleteHeaderSize, h.key_len));
}

Result<FieldValues> decode_complete(const CompleteRowImage& image, const SchemaDef& schema) {
  std::string_view row = image.bytes;
  if (row.size() < kCompleteHeaderSize) return Status(ErrorCode::kCorruptHeader, "row truncated");
  const CompleteHeader h = parse_complete_header(row);
  if (h.invalid) return Status(ErrorCode::kInvalidRow);
  if (h.kv_size < schema.fixed_region_size) return Status(ErrorCode::kCorruptHeader, "kv_size below fixed region");
  if (row.size() < h.row_size()) return Status(ErrorCode::kCorruptHeader, "row shorter than kv_size");

  FieldValues out(schema.field_count());
  std::size_t out_of_line = 0;
  const std::size_t fixed_base = h.fixed_base();
  for (std::size_t i = 0; i < schema.field_count(); ++i) {
    const std::size_t off = fixed_base + schema.fixed_offsets[i];
    if (schema.fields[i].kind == FieldKind::kFixed) {
      out[i] = std::string(row.substr(off, schema.fields[i].size));
      continue;
    }
    auto v = read_var(row.substr(0, h.row_size()), image.base, off);
    if (!v.ok()) return v.status();
    if (v->size() > kInlineVarLimit) out_of_line += v->size();
    out[i] = std::move(v).value();
  }
  if (schema.fixed_region_size + out_of_line != h.kv_size) {
    return Status(ErrorCode::kCorruptHeader, "kv_size disagrees with variable content");
  }
  return out;
}

Status rebase_complete(CompleteRowImage& image, const SchemaDef& schema, LogAddr new_base) {
  if (image.bytes.size() < kCompleteHeaderSize) return Status(ErrorCode::kCorruptHeader);
  const CompleteHeader h = parse_complete_header(image.bytes);
  for (std::size_t i = 0; i < schema.field_count(); ++i) {
    if (schema.fields[i].kind != FieldKind::kVariable) continue;
    char* head = image.bytes.data() + h.fixed_base() + schema.fixed_offsets[i];
    const VarHead vh = parse_var_head(std::string_view(head, kVarHeadSize));
    if (!vh.is_inline()) store_le<std::uint64_t>(head + 4, vh.payload - image.base + new_base);
  }
  image.base = new_base;
  return Status::OK();
}

Result<DeltaRowImage> encode_delta(const SchemaDef& schema, FieldUpdates updates, LogAddr prev, LogAddr base) {
  if (updates.empty()) return Status(ErrorCode::kEmptyFieldSet);
  if (prev == kNullAddr) return Status(ErrorCode::kBadAddress, "delta without predecessor");
  std::stable_sort(updates.begin(), updates.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Later duplicates win.
  FieldUpdates uniq;
  for (auto& u : updates) {
    if (!uniq.empty() && uniq.back().first == u.first) {
      uniq.back().second = std::move(u.second);
    } else {
      uniq.push_back(std::move(u));
    }
  }
  for (const auto& [id, v] : uniq) {
    if (id >= schema.field_count()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
    FOCUS_RETURN_IF_ERROR(check_value(schema.fields[id], v));
  }

  const std::size_t meta = delta_meta_size(uniq.size());
  DeltaRowImage img;
  img.base = base;
  img.bytes.reserve(meta + 128);
  append_le<std::uint16_t>(img.bytes, static_cast<std::uint16_t>(meta));
  append_le<std::uint16_t>(img.bytes, static_cast<std::uint16_t>(uniq.size()));
  for (const auto& u : uniq) append_le<std::uint16_t>(img.bytes, u.first);
  append_le<std::uint64_t>(img.bytes, prev);
  for (const auto& [id, v] : uniq) {
    if (schema.fields[id].kind == FieldKind::kFixed) {
      img.bytes += v;
      continue;
    }
    const LogAddr content_at = base + img.bytes.size() + kVarHeadSize;
    img.bytes += make_var_head(v, content_at);
    if (v.size() > kInlineVarLimit) img.bytes += v;
  }
  if (img.bytes.size() > 0xFFFF) return Status(ErrorCode::kValueTooLarge, "delta row");
  return img;
}

Result<std::vector<DeltaFieldLoc>> locate_delta_fields(const SchemaDef& schema, const DeltaHeader& header,
                                                       const RowReader& read) {
  std::vector<DeltaFieldLoc> locs;
  locs.reserve(header.field_ids.size());
  std::size_t off = header.meta_size;
  for (FieldId id : header.field_ids) {
    if (id >= schema.field_count()) return Status(ErrorCode::kCorruptHeader, "delta field id out of range");
    const FieldDef& f = schema.fields[id];
    std::uint32_t len = 0;
    if (f.kind == FieldKind::kFixed) {
      len = f.size;
    } else {
      auto head = read(off, kVarHeadSize);
      if (!head.ok()) return head.status();
      const VarHead vh = parse_var_head(*head);
      len = kVarHeadSize + (vh.is_inline() ? 0 : vh.size);
    }
    locs.push_back({id, static_cast<std::uint32_t>(off), len});
    off += len;
  }
  return locs;
}

Result<std::size_t> delta_row_size(const SchemaDef& schema, const DeltaHeader& header, const RowReader& read) {
  auto locs = locate_delta_fields(schema, header, read);
  if (!locs.ok()) return locs.status();
  if (locs->empty()) return std::size_t{header.meta_size};
  return std::size_t{locs->back().offset} + locs->back().length;
}

namespace {

RowReader buffer_reader(std::string_view bytes) {
  return [bytes](std::size_t off, std::size_t len) -> Result<std::string> {
    if (off + len > bytes.size()) return Status(ErrorCode::kCorruptHeader, "read past row end");
    return std::string(bytes.substr(off, len));
  };
}

}  // namespace

Status rebase_delta(DeltaRowImage& image, const SchemaDef& schema, LogAddr new_base) {
  auto hdr = parse_delta_header(image.bytes);
  if (!hdr.ok()) return hdr.status();
  auto locs = locate_delta_fields(schema, *hdr, buffer_reader(image.bytes));
  if (!locs.ok()) return locs.status();
  for (const auto& loc : *locs) {
    if (schema.fields[loc.id].kind != FieldKind::kVariable) continue;
    char* head = image.bytes.data() + loc.offset;
    const VarHead vh = parse_var_head(std::string_view(head, kVarHeadSize));
    if (!vh.is_inline()) store_le<std::uint64_t>(head + 4, vh.payload - image.base + new_base);
  }
  image.base = new_base;
  return Status::OK();
}

Result<std::optional<std::string>> extract_field(const CompleteRowImage& image, const SchemaDef& schema, FieldId id) {
  if (id >= schema.field_count()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
  std::string_view row = image.bytes;
  if (row.size() < kCompleteHeaderSize) return Status(ErrorCode::kCorruptHeader);
  const CompleteHeader h = parse_complete_header(row);
  if (row.size() < h.row_size() || h.kv_size < schema.fixed_region_size) return Status(ErrorCode::kCorruptHeader);
  const std::size_t off = h.fixed_base() + schema.fixed_offsets[id];
  if (schema.fields[id].kind == FieldKind::kFixed) return std::optional<std::string>(row.substr(off, schema.fields[id].size));
  auto v = read_var(row.substr(0, h.row_size()), image.base, off);
  if (!v.ok()) return v.status();
  return std::optional<std::string>(std::move(v).value());
}

Result<std::optional<std::string>> extract_field(const DeltaRowImage& image, const SchemaDef& schema, FieldId id) {
  if (id >= schema.field_count()) return Status(ErrorCode::kFieldIdOutOfRange, std::to_string(id));
  auto hdr = parse_delta_header(image.bytes);
  if (!hdr.ok()) return hdr.status();
  if (!std::binary_search(hdr->field_ids.begin(), hdr->field_ids.end(), id)) return std::optional<std::string>();
  auto locs = locate_delta_fields(schema, *hdr, buffer_reader(image.bytes));
  if (!locs.ok()) return locs.status();
  for (const auto& loc : *locs) {
    if (loc.id != id) continue;
    if (loc.offset + loc.length > image.bytes.size()) return Status(ErrorCode::kCorruptHeader);
    if (schema.fields[id].kind == FieldKind::kFixed) {
      return std::optional<std::string>(image.bytes.substr(loc.offset, loc.length));
    }
    auto v = read_var(image.bytes, image.base, loc.offset);
    if (!v.ok()) return v.status();
    return std::optional<std::string>(std::move(v).value());
  }
  return std::optional<std::string>();
}

Result<std::optional<std::string>> extract_field(const RowImage& image, const SchemaDef& schema, FieldId id) {
  return std::visit([&](const auto& img) { return extract_field(img, schema, id); }, image);
}

}  // namespace focus
