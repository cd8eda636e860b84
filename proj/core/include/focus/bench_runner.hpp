#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "focus/kv_api.hpp"
#include "focus/workload.hpp"

namespace focus {

/// Latency histogram: 1 us buckets up to 100 ms, plus one overflow bucket.
class LatencyHistogram {
 public:
  static constexpr std::size_t kBuckets = 100'000;

  LatencyHistogram() : counts_(kBuckets + 1, 0) {}
  void record_ns(std::uint64_t ns);
  void merge(const LatencyHistogram& other);
  std::uint64_t count() const { return total_; }
  /// Upper edge, in microseconds, of the bucket holding quantile q.
  double percentile_us(double q) const;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct ReportRow {
  std::string engine;
  std::string workload;
  std::uint32_t threads = 1;
  double ops_per_s = 0;
  double p50_us = 0;
  double p99_us = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t flushes = 0;
  std::uint64_t fences = 0;
  double hit_ratio = 0;
  std::uint64_t suboperations = 0;

  static std::string csv_header();
  std::string to_csv() const;
};

enum class EngineKind { kFocus, kConsolidated, kScattered };
Result<EngineKind> engine_by_name(const std::string& name);
const char* engine_name(EngineKind kind);

Result<std::unique_ptr<RecordStore>> open_engine(EngineKind kind, const FocusOptions& options);

/// Creates the benchmark schema: field_count fixed fields of field_size bytes.
Result<SchemaId> create_bench_schema(RecordStore& store, const WorkloadSpec& spec);
FieldMap make_record(const WorkloadSpec& spec, std::uint64_t key, std::uint64_t salt);

Status preload(RecordStore& store, SchemaId schema, const WorkloadSpec& spec);

/// Runs the op stream split round-robin over `threads` workers. Counters are reset first, so the
/// row covers the run phase only.
Result<ReportRow> run_workload(RecordStore& store, SchemaId schema, const WorkloadSpec& spec, std::uint32_t threads,
                               std::uint64_t seed, const std::string& engine);

}  // namespace focus
