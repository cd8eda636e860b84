#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "focus/global_index.hpp"
#include "focus/plog.hpp"
#include "focus/pmem_backend.hpp"
#include "focus/schema.hpp"
#include "focus/seacache.hpp"
#include "focus/swim_engine.hpp"

namespace focus {

/// Field name -> bytes.
using FieldMap = std::map<std::string, std::string>;
using ScanRow = std::pair<HierKey, FieldMap>;

struct AccessStats {
  std::uint64_t ops = 0;
  std::uint64_t kv_suboperations = 0;
  std::uint64_t bytes_touched = 0;
};

/// Flat snapshot of every counter a store exposes.
struct StoreStats {
  std::uint64_t ops = 0;
  std::uint64_t kv_suboperations = 0;
  std::uint64_t bytes_touched = 0;
  std::uint64_t cacheline_flushes = 0;
  std::uint64_t fences = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t reads_256b_rounded = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t cache_probes = 0;
  double hit_ratio = 0.0;
  std::uint64_t restore_rewrites = 0;
  std::uint64_t merges = 0;
  std::uint64_t gc_reclaimed_bytes = 0;
};

/// The six record operations, shared by the engine and the two mapping baselines.
class RecordStore {
 public:
  virtual ~RecordStore() = default;
  virtual Result<SchemaId> create_schema(const std::string& name, const std::vector<FieldDef>& fields) = 0;
  /// Upsert of a full record.
  virtual Status put(const HierKey& key, const FieldMap& value) = 0;
  virtual Status update(const HierKey& key, const FieldMap& fields) = 0;
  /// Empty `fields` reads every field.
  virtual Result<FieldMap> get(const HierKey& key, const std::vector<std::string>& fields) = 0;
  virtual Result<std::vector<ScanRow>> scan(const HierKey& start, const std::vector<std::string>& fields,
                                            std::size_t count) = 0;
  virtual Status del(const HierKey& key) = 0;

  virtual AccessStats access_stats() const = 0;
  virtual StoreStats stats() const = 0;
  virtual void reset_stats() = 0;
};

struct FocusOptions {
  PmemOptions pmem;
  PlogOptions plog;
  SwimOptions swim;
  bool cache_enabled = true;
  SeaCacheOptions cache;
  const Clock* clock = nullptr;  // cache timestamps; steady clock when null
};

/// The engine facade: schema-aware records over the two-layer log, with the index-integrated cache.
class Focus final : public RecordStore {
 public:
  static Result<std::unique_ptr<Focus>> open(const FocusOptions& options);
  /// Opens over an existing region (e.g. a crash image), recovering whatever it holds.
  static Result<std::unique_ptr<Focus>> open_backend(std::unique_ptr<PmemBackend> backend, const FocusOptions& options);
  ~Focus() override;

  Result<SchemaId> create_schema(const std::string& name, const std::vector<FieldDef>& fields) override;
  Status put(const HierKey& key, const FieldMap& value) override;
  Status update(const HierKey& key, const FieldMap& fields) override;
  Result<FieldMap> get(const HierKey& key, const std::vector<std::string>& fields) override;
  Result<std::vector<ScanRow>> scan(const HierKey& start, const std::vector<std::string>& fields,
                                    std::size_t count) override;
  Status del(const HierKey& key) override;

  // Positional forms: values indexed by field id.
  Status put_values(const HierKey& key, const FieldValues& values);
  Status update_values(const HierKey& key, FieldUpdates updates);
  Result<FieldValues> get_values(const HierKey& key, const FieldIdSet& fields, ReadTrace* trace = nullptr);
  Result<std::vector<std::pair<HierKey, FieldValues>>> scan_values(const HierKey& start, const FieldIdSet& fields,
                                                                   std::size_t count);

  AccessStats access_stats() const override;
  StoreStats stats() const override;
  void reset_stats() override;

  const SchemaRegistry& registry() const { return *registry_; }
  PmemBackend& backend() { return *backend_; }
  Plog& log() { return *log_; }
  GlobalIndex& index() { return *index_; }
  SwimEngine& engine() { return *engine_; }
  SeaCache* cache() { return cache_.get(); }

 private:
  Focus() = default;
  Status init(const FocusOptions& options);
  void account(std::uint64_t subops, const IoTally& before);

  FocusOptions options_;
  std::unique_ptr<PmemBackend> backend_;
  std::unique_ptr<SchemaRegistry> registry_;
  std::unique_ptr<Plog> log_;
  std::unique_ptr<GlobalIndex> index_;
  std::unique_ptr<SwimEngine> engine_;
  std::unique_ptr<SeaCache> cache_;

  ShardedCounter ops_, subops_, bytes_;
  FlushStats flush_base_;
};

/// Baselines over a flat single-value schema in the same engine.
/// Consolidated: one KV per record holding a serialized blob.
/// Scattered: one KV per attribute, keyed "<record key>/<attribute>".
class MappedStore final : public RecordStore {
 public:
  enum class Mapping { kConsolidated, kScattered };

  static Result<std::unique_ptr<MappedStore>> open(Mapping mapping, const FocusOptions& options);

  Result<SchemaId> create_schema(const std::string& name, const std::vector<FieldDef>& fields) override;
  Status put(const HierKey& key, const FieldMap& value) override;
  Status update(const HierKey& key, const FieldMap& fields) override;
  Result<FieldMap> get(const HierKey& key, const std::vector<std::string>& fields) override;
  Result<std::vector<ScanRow>> scan(const HierKey& start, const std::vector<std::string>& fields,
                                    std::size_t count) override;
  Status del(const HierKey& key) override;

  AccessStats access_stats() const override;
  StoreStats stats() const override;
  void reset_stats() override;

  Mapping mapping() const { return mapping_; }
  Focus& base() { return *base_; }

  static constexpr const char* kFlatSchema = "__flat";
  static constexpr const char* kFlatField = "value";

 private:
  MappedStore(Mapping mapping, std::unique_ptr<Focus> base, SchemaId flat);
  const SchemaDef* logical(const HierKey& key, Status* err) const;
  HierKey flat_key(const HierKey& key) const;
  HierKey attr_key(const HierKey& key, const std::string& attr) const;
  Result<FieldMap> load_blob(const HierKey& key, const SchemaDef& schema);
  Status store_blob(const HierKey& key, const SchemaDef& schema, const FieldMap& record);
  void account(std::uint64_t subops, const IoTally& before);

  Mapping mapping_;
  std::unique_ptr<Focus> base_;
  SchemaId flat_;
  SchemaRegistry logical_;
  ShardedCounter ops_, subops_, bytes_;
};

/// Serialized form used by the consolidated mapping: per field in schema order, [u32 len][bytes].
std::string serialize_record(const SchemaDef& schema, const FieldMap& record);
Result<FieldMap> deserialize_record(const SchemaDef& schema, std::string_view blob);

}  // namespace focus
