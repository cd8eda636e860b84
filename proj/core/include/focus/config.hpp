#pragma once

#include <string>
#include <string_view>

#include "focus/kv_api.hpp"

namespace focus {

/// Applies `key = value` lines onto `options`. '#' starts a comment; blank lines are skipped.
/// Unknown keys and malformed values are InvalidArgument, reported with the line number.
Status apply_config_text(std::string_view text, FocusOptions& options);
Status apply_config_file(const std::string& path, FocusOptions& options);

}  // namespace focus
