#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "focus/status.hpp"

namespace focus {

enum class OpKind : std::uint8_t {
  kInsert,
  kReadFull,
  kReadPartial,
  kUpdate,
  kScanFull,
  kScanPartial,
  kReadModifyWrite,
};
inline constexpr std::size_t kOpKinds = 7;
const char* op_kind_name(OpKind kind);

enum class KeyDistribution : std::uint8_t { kZipfian, kUniform, kLatest };

struct WorkloadSpec {
  std::string name;
  /// Percent per OpKind; must sum to 100.
  std::array<double, kOpKinds> mix{};
  std::uint64_t record_count = 100'000;
  std::uint64_t op_count = 1'000'000;
  std::uint32_t field_count = 10;
  std::uint32_t field_size = 100;
  KeyDistribution distribution = KeyDistribution::kZipfian;
  double zipf_theta = 0.99;
  std::uint32_t scan_width = 100;
  std::uint32_t partial_field_count = 1;
};

Status validate(const WorkloadSpec& spec);

/// "A".."F" or "micro:<insert|readF|readP|update|scanF|scanP>".
Result<WorkloadSpec> workload_by_name(const std::string& name);

struct Op {
  OpKind kind = OpKind::kReadFull;
  std::uint64_t key = 0;  // record index
  std::uint32_t first_field = 0;  // partial ops and updates touch partial_field_count fields from here, wrapping
  std::uint32_t scan_len = 0;
};

/// Zipfian ranks in [0, n) with rank 0 the most popular; n may grow between draws.
class ZipfGenerator {
 public:
  ZipfGenerator(std::uint64_t n, double theta);
  std::uint64_t next(std::mt19937_64& rng);
  /// Extends the item count, updating the normalizer incrementally.
  void grow(std::uint64_t n);
  std::uint64_t items() const { return n_; }
  double zeta() const { return zetan_; }

 private:
  void refresh();

  std::uint64_t n_ = 0;
  double theta_;
  double zeta2_;
  double zetan_ = 0.0;
  double alpha_ = 0.0;
  double eta_ = 0.0;
};

/// Deterministic op stream for a spec. Inserts take fresh indexes after the preloaded range.
class OpGenerator {
 public:
  OpGenerator(const WorkloadSpec& spec, std::uint64_t seed);
  Op next();
  std::uint64_t inserted() const { return next_insert_; }

 private:
  std::uint64_t pick_key();
  std::uint64_t scatter(std::uint64_t rank) const;

  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  std::discrete_distribution<int> kind_;
  ZipfGenerator zipf_;
  std::uint64_t next_insert_;
  std::uint64_t stride_;
};

std::vector<Op> generate(const WorkloadSpec& spec, std::uint64_t seed);

/// Dataset naming shared by preload, runs and tests.
std::string record_key(std::uint64_t index);
std::string field_name(std::uint32_t field);
/// Deterministic content for one field; `salt` distinguishes successive writes.
std::string field_value(std::uint64_t key, std::uint32_t field, std::uint32_t size, std::uint64_t salt);

}  // namespace focus
