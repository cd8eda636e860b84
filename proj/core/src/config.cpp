#include "focus/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace focus {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_int(std::string_view v, T& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size();
}

bool parse_double(std::string_view v, double& out) {
  // from_chars for double is missing on older libstdc++ builds.
  std::string s(v);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return !s.empty() && end == s.c_str() + s.size();
}

bool parse_bool(std::string_view v, bool& out) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "0" || v == "false" || v == "off" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

using Setter = std::function<bool(std::string_view, FocusOptions&)>;

const std::unordered_map<std::string_view, Setter>& setters() {
  static const std::unordered_map<std::string_view, Setter> table = {
      {"pmem_path", [](std::string_view v, FocusOptions& o) { o.pmem.path = std::string(v); return true; }},
      {"pmem_capacity", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.pmem.capacity); }},
      {"clog_extent", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.plog.clog_extent); }},
      {"dlog_extent", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.plog.dlog_extent); }},
      {"gc_live_ratio", [](std::string_view v, FocusOptions& o) { return parse_double(v, o.plog.gc_live_ratio); }},
      {"gc_region_utilization",
       [](std::string_view v, FocusOptions& o) { return parse_double(v, o.plog.gc_region_utilization); }},
      {"restore_threshold",
       [](std::string_view v, FocusOptions& o) { return parse_int(v, o.swim.restore_threshold); }},
      {"merge_queue_depth",
       [](std::string_view v, FocusOptions& o) { return parse_int(v, o.swim.merge_queue_depth); }},
      {"merge_batch", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.swim.merge_batch); }},
      {"background", [](std::string_view v, FocusOptions& o) {
         bool b = false;
         if (!parse_bool(v, b)) return false;
         o.swim.background = b;
         o.cache.background = b;
         return true;
       }},
      {"cache_enabled", [](std::string_view v, FocusOptions& o) { return parse_bool(v, o.cache_enabled); }},
      {"cache_capacity_bytes",
       [](std::string_view v, FocusOptions& o) { return parse_int(v, o.cache.capacity_bytes); }},
      {"cache_page_size", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.cache.page_size); }},
      {"hit_threshold", [](std::string_view v, FocusOptions& o) { return parse_double(v, o.cache.hit_threshold); }},
      {"page_usage_target",
       [](std::string_view v, FocusOptions& o) { return parse_double(v, o.cache.page_usage_target); }},
      {"ema_alpha", [](std::string_view v, FocusOptions& o) { return parse_double(v, o.cache.ema_alpha); }},
      {"var_quota", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.cache.var_quota); }},
      {"task_queue_len", [](std::string_view v, FocusOptions& o) { return parse_int(v, o.cache.task_queue_len); }},
      // low_ms,mid_ms,high_ms
      {"rw_table", [](std::string_view v, FocusOptions& o) {
         double ms[3];
         for (int i = 0; i < 3; ++i) {
           const auto comma = v.find(',');
           if ((i < 2) == (comma == std::string_view::npos)) return false;
           if (!parse_double(trim(v.substr(0, comma)), ms[i])) return false;
           v = i < 2 ? v.substr(comma + 1) : std::string_view();
         }
         o.cache.rw_table.low_ms = ms[0];
         o.cache.rw_table.mid_ms = ms[1];
         o.cache.rw_table.high_ms = ms[2];
         return true;
       }},
  };
  return table;
}

}  // namespace

Status apply_config_text(std::string_view text, FocusOptions& options) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      return Status(ErrorCode::kInvalidArgument, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      return Status(ErrorCode::kInvalidArgument, "line " + std::to_string(line_no) + ": unknown key " + std::string(key));
    }
    if (!it->second(value, options)) {
      return Status(ErrorCode::kInvalidArgument,
                    "line " + std::to_string(line_no) + ": bad value for " + std::string(key));
    }
  }
  return Status::OK();
}

Status apply_config_file(const std::string& path, FocusOptions& options) {
  std::ifstream in(path);
  if (!in) return Status(ErrorCode::kIOError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return apply_config_text(buf.str(), options);
}

}  // namespace focus
