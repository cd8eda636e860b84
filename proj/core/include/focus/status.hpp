#pragma once

#include <cassert>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <variant>

namespace focus {

enum class ErrorCode {
  kOk = 0,
  // schema registry
  kDuplicateSchemaName,
  kDuplicateFieldName,
  kZeroSizeFixedField,
  kZeroFieldSchema,
  kUnknownFieldName,
  kUnknownSchema,
  kFieldIdOutOfRange,
  kSchemaEvolution,
  // record codec
  kFixedSizeMismatch,
  kMissingFieldValue,
  kCorruptHeader,
  kInvalidRow,
  kEmptyFieldSet,
  kValueTooLarge,
  // persistence
  kOutOfRange,
  kUnalignedFlush,
  kCapacityExhausted,
  kDLogFull,
  kBadAddress,
  kChunkBusy,
  kIOError,
  // index / engine
  kKeyAbsent,
  kUnsortedInput,
  // cache
  kChecksumMismatch,
  kPoolExhausted,
  // workloads / config
  kInvalidMix,
  kInvalidArgument,
};

const char* error_code_name(ErrorCode code);

/// Outcome of an operation that produces no value.
class [[nodiscard]] Status {
 public:
  Status() = default;
  Status(ErrorCode code, std::string message = {}) : code_(code), message_(std::move(message)) {}

  static Status OK() { return Status(); }

  bool ok() const { return code_ == ErrorCode::kOk; }
  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

  std::string ToString() const;

  friend bool operator==(const Status& s, ErrorCode c) { return s.code_ == c; }

 private:
  ErrorCode code_ = ErrorCode::kOk;
  std::string message_;
};

inline std::ostream& operator<<(std::ostream& os, const Status& s) { return os << s.ToString(); }

/// Either a value or a non-OK Status.
template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Status status) : v_(std::move(status)) { assert(!std::get<Status>(v_).ok()); }
  Result(ErrorCode code, std::string message = {}) : v_(Status(code, std::move(message))) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  const Status& status() const {
    static const Status kOkStatus;
    return ok() ? kOkStatus : std::get<Status>(v_);
  }
  ErrorCode code() const { return ok() ? ErrorCode::kOk : std::get<Status>(v_).code(); }

  T& value() & { return std::get<T>(v_); }
  const T& value() const& { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }

  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

 private:
  std::variant<T, Status> v_;
};

#define FOCUS_RETURN_IF_ERROR(expr)      \
  do {                                   \
    ::focus::Status _st = (expr);        \
    if (!_st.ok()) return _st;           \
  } while (0)

#define FOCUS_CONCAT_INNER(a, b) a##b
#define FOCUS_CONCAT(a, b) FOCUS_CONCAT_INNER(a, b)
#define FOCUS_ASSIGN_OR_RETURN_IMPL(tmp, lhs, expr) \
  auto tmp = (expr);                                \
  if (!tmp.ok()) return tmp.status();               \
  lhs = std::move(tmp).value()
#define FOCUS_ASSIGN_OR_RETURN(lhs, expr) \
  FOCUS_ASSIGN_OR_RETURN_IMPL(FOCUS_CONCAT(_focus_r_, __LINE__), lhs, expr)

}  // namespace focus
