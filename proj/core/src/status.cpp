#include "focus/status.hpp"

namespace focus {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "OK";
    case ErrorCode::kDuplicateSchemaName: return "DuplicateSchemaName";
    case ErrorCode::kDuplicateFieldName: return "DuplicateFieldName";
    case ErrorCode::kZeroSizeFixedField: return "ZeroSizeFixedField";
    case ErrorCode::kZeroFieldSchema: return "ZeroFieldSchema";
    case ErrorCode::kUnknownFieldName: return "UnknownFieldName";
    case ErrorCode::kUnknownSchema: return "UnknownSchema";
    case ErrorCode::kFieldIdOutOfRange: return "FieldIdOutOfRange";
    case ErrorCode::kSchemaEvolution: return "SchemaEvolution";
    case ErrorCode::kFixedSizeMismatch: return "FixedSizeMismatch";
    case ErrorCode::kMissingFieldValue: return "MissingFieldValue";
    case ErrorCode::kCorruptHeader: return "CorruptHeader";
    case ErrorCode::kInvalidRow: return "InvalidRow";
    case ErrorCode::kEmptyFieldSet: return "EmptyFieldSet";
    case ErrorCode::kValueTooLarge: return "ValueTooLarge";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kUnalignedFlush: return "UnalignedFlush";
    case ErrorCode::kCapacityExhausted: return "CapacityExhausted";
    case ErrorCode::kDLogFull: return "DLogFull";
    case ErrorCode::kBadAddress: return "BadAddress";
    case ErrorCode::kChunkBusy: return "ChunkBusy";
    case ErrorCode::kIOError: return "IOError";
    case ErrorCode::kKeyAbsent: return "KeyAbsent";
    case ErrorCode::kUnsortedInput: return "UnsortedInput";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kPoolExhausted: return "PoolExhausted";
    case ErrorCode::kInvalidMix: return "InvalidMix";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string Status::ToString() const {
  if (ok()) return "OK";
  std::string s = error_code_name(code_);
  if (!message_.empty()) {
    s += ": ";
    s += message_;
  }
  return s;
}

}  // namespace focus
