#include "focus/bench_runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

namespace focus {

void LatencyHistogram::record_ns(std::uint64_t ns) {
  ++counts_[std::min<std::uint64_t>(ns / 1000, kBuckets)];
  ++total_;
}

void LatencyHistogram::merge(const LatencyHistogram& other) {
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

double LatencyHistogram::percentile_us(double q) const {
  if (total_ == 0) return 0;
  const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(total_)));
  std::uint64_t seen = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    seen += counts_[i];
    if (seen >= std::max<std::uint64_t>(rank, 1)) return static_cast<double>(i + 1);
  }
  return static_cast<double>(kBuckets + 1);
}

std::string ReportRow::csv_header() {
  return "engine,workload,threads,ops_per_s,p50_us,p99_us,bytes_read,bytes_written,flushes,fences,hit_ratio,"
         "suboperations";
}

std::string ReportRow::to_csv() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%u,%.1f,%.0f,%.0f,%llu,%llu,%llu,%llu,%.4f,%llu", engine.c_str(),
                workload.c_str(), threads, ops_per_s, p50_us, p99_us, static_cast<unsigned long long>(bytes_read),
                static_cast<unsigned long long>(bytes_written), static_cast<unsigned long long>(flushes),
                static_cast<unsigned long long>(fences), hit_ratio, static_cast<unsigned long long>(suboperations));
  return buf;
}

Result<EngineKind> engine_by_name(const std::string& name) {
  if (name == "focus") return EngineKind::kFocus;
  if (name == "consolidated") return EngineKind::kConsolidated;
  if (name == "scattered") return EngineKind::kScattered;
  return Status(ErrorCode::kInvalidArgument, "unknown engine " + name);
}

const char* engine_name(EngineKind kind) {
  switch (kind) {
    case EngineKind::kFocus: return "focus";
    case EngineKind::kConsolidated: return "consolidated";
    case EngineKind::kScattered: return "scattered";
  }
  return "?";
}

Result<std::unique_ptr<RecordStore>> open_engine(EngineKind kind, const FocusOptions& options) {
  if (kind == EngineKind::kFocus) {
    auto s = Focus::open(options);
    if (!s.ok()) return s.status();
    return std::unique_ptr<RecordStore>(std::move(s).value());
  }
  auto s = MappedStore::open(
      kind == EngineKind::kConsolidated ? MappedStore::Mapping::kConsolidated : MappedStore::Mapping::kScattered,
      options);
  if (!s.ok()) return s.status();
  return std::unique_ptr<RecordStore>(std::move(s).value());
}

Result<SchemaId> create_bench_schema(RecordStore& store, const WorkloadSpec& spec) {
  std::vector<FieldDef> fields;
  for (std::uint32_t f = 0; f < spec.field_count; ++f) fields.push_back(FieldDef::Fixed(field_name(f), spec.field_size));
  return store.create_schema("usertable", fields);
}

FieldMap make_record(const WorkloadSpec& spec, std::uint64_t key, std::uint64_t salt) {
  FieldMap m;
  for (std::uint32_t f = 0; f < spec.field_count; ++f) m[field_name(f)] = field_value(key, f, spec.field_size, salt);
  return m;
}

Status preload(RecordStore& store, SchemaId schema, const WorkloadSpec& spec) {
  for (std::uint64_t k = 0; k < spec.record_count; ++k) {
    FOCUS_RETURN_IF_ERROR(store.put(HierKey{schema, record_key(k)}, make_record(spec, k, 0)));
  }
  return Status::OK();
}

namespace {

std::vector<std::string> partial_fields(const WorkloadSpec& spec, std::uint32_t first) {
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < spec.partial_field_count; ++i) names.push_back(field_name((first + i) % spec.field_count));
  return names;
}

Status execute(RecordStore& store, SchemaId schema, const WorkloadSpec& spec, const Op& op, std::uint64_t salt) {
  const HierKey key{schema, record_key(op.key)};
  Status st;
  switch (op.kind) {
    case OpKind::kInsert:
      st = store.put(key, make_record(spec, op.key, salt));
      break;
    case OpKind::kReadFull:
      st = store.get(key, {}).status();
      break;
    case OpKind::kReadPartial:
      st = store.get(key, partial_fields(spec, op.first_field)).status();
      break;
    case OpKind::kUpdate: {
      FieldMap m;
      for (const auto& name : partial_fields(spec, op.first_field)) {
        m[name] = field_value(op.key, op.first_field, spec.field_size, salt);
      }
      st = store.update(key, m);
      break;
    }
    case OpKind::kScanFull:
      st = store.scan(key, {}, op.scan_len).status();
      break;
    case OpKind::kScanPartial:
      st = store.scan(key, partial_fields(spec, op.first_field), op.scan_len).status();
      break;
    case OpKind::kReadModifyWrite: {
      auto cur = store.get(key, {});
      if (!cur.ok()) {
        st = cur.status();
        break;
      }
      const std::string name = field_name(op.first_field);
      st = store.update(key, {{name, field_value(op.key, op.first_field, spec.field_size, salt)}});
      break;
    }
  }
  // A latest-read can race ahead of an insert owned by another worker.
  if (st.code() == ErrorCode::kKeyAbsent) return Status::OK();
  return st;
}

}  // namespace

Result<ReportRow> run_workload(RecordStore& store, SchemaId schema, const WorkloadSpec& spec, std::uint32_t threads,
                               std::uint64_t seed, const std::string& engine) {
  FOCUS_RETURN_IF_ERROR(validate(spec));
  if (threads == 0) return Status(ErrorCode::kInvalidArgument, "threads must be positive");
  const std::vector<Op> ops = generate(spec, seed);
  store.reset_stats();

  std::vector<LatencyHistogram> hists(threads);
  std::vector<Status> errors(threads);
  std::atomic<bool> go{false};
  std::vector<std::thread> workers;
  for (std::uint32_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
      for (std::size_t i = t; i < ops.size(); i += threads) {
        const auto start = std::chrono::steady_clock::now();
        Status st = execute(store, schema, spec, ops[i], seed + i + 1);
        const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
        hists[t].record_ns(static_cast<std::uint64_t>(ns.count()));
        if (!st.ok()) {
          errors[t] = st;
          return;
        }
      }
    });
  }
  const auto begin = std::chrono::steady_clock::now();
  go.store(true, std::memory_order_release);
  for (auto& w : workers) w.join();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  for (const Status& st : errors) FOCUS_RETURN_IF_ERROR(st);

  LatencyHistogram all;
  for (const auto& h : hists) all.merge(h);
  const StoreStats s = store.stats();
  ReportRow row;
  row.engine = engine;
  row.workload = spec.name;
  row.threads = threads;
  row.ops_per_s = secs > 0 ? static_cast<double>(ops.size()) / secs : 0;
  row.p50_us = all.percentile_us(0.50);
  row.p99_us = all.percentile_us(0.99);
  row.bytes_read = s.bytes_read;
  row.bytes_written = s.bytes_written;
  row.flushes = s.cacheline_flushes;
  row.fences = s.fences;
  row.hit_ratio = s.hit_ratio;
  row.suboperations = s.kv_suboperations;
  return row;
}

}  // namespace focus
