#pragma once

#include <map>
#include <memory>
#include <string>

#include "focus/kv_api.hpp"

namespace focus::testing {

// Small region, everything driven from the test thread.
inline FocusOptions desk_options(bool cache = false) {
  FocusOptions o;
  o.pmem.capacity = 48ull << 20;
  o.plog.clog_extent = 256u << 10;
  o.plog.dlog_extent = 64u << 10;
  o.swim.background = false;
  o.cache_enabled = cache;
  o.cache.background = false;
  o.cache.capacity_bytes = 4ull << 20;
  return o;
}

inline std::unique_ptr<Focus> open_focus(const FocusOptions& o) {
  auto s = Focus::open(o);
  if (!s.ok()) throw std::runtime_error(s.status().ToString());
  return std::move(s).value();
}

inline std::vector<FieldDef> fixed_fields(std::uint32_t count, std::uint32_t size) {
  std::vector<FieldDef> f;
  for (std::uint32_t i = 0; i < count; ++i) f.push_back(FieldDef::Fixed("f" + std::to_string(i), size));
  return f;
}

// Reference behaviour: a plain ordered map of records.
class ModelStore {
 public:
  void put(const std::string& key, const FieldMap& value) { rows_[key] = value; }
  bool update(const std::string& key, const FieldMap& fields) {
    auto it = rows_.find(key);
    if (it == rows_.end()) return false;
    for (const auto& [k, v] : fields) it->second[k] = v;
    return true;
  }
  const FieldMap* get(const std::string& key) const {
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
  }
  bool del(const std::string& key) { return rows_.erase(key) > 0; }
  const std::map<std::string, FieldMap>& rows() const { return rows_; }

 private:
  std::map<std::string, FieldMap> rows_;
};

inline FieldMap project(const FieldMap& row, const std::vector<std::string>& names) {
  if (names.empty()) return row;
  FieldMap out;
  for (const auto& n : names) out[n] = row.at(n);
  return out;
}

}  // namespace focus::testing
