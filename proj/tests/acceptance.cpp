// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and budgets are pinned below.
#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "focus/bench_runner.hpp"
#include "focus/kv_api.hpp"
#include "focus/workload.hpp"
#include "support.hpp"

using namespace focus;
using namespace focus::testing;

namespace {

constexpr double kModelBudgetS = 60;
constexpr double kConcurrencyBudgetS = 120;
constexpr double kCrashBudgetS = 120;
constexpr double kRatioBudgetS = 60;
constexpr double kConsolidatedOverFocusMin = 8.0;
constexpr double kAdmitTolerance = 0.02;
constexpr double kHotspotRecovery = 0.90;
constexpr double kCacheReadSavingMin = 0.50;
// Run-to-run jitter allowed between thread counts before calling a step a decrease.
constexpr double kScalingNoise = 0.03;

struct Verdict {
  bool pass = false;
  std::string detail;
  bool hardware_bound = false;  // failure explained by the host, reported but not counted
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
  return s;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

// ---------------------------------------------------------------------------------------------
// 1. Model-oracle equivalence

Verdict model_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  FocusOptions o = desk_options(true);
  o.pmem.capacity = 8ull << 20;
  o.plog.gc_region_utilization = 0.6;
  o.plog.gc_live_ratio = 0.5;
  o.cache.capacity_bytes = 256 << 10;
  auto store = open_focus(o);

  std::vector<FieldDef> defs;
  const std::uint32_t sizes[8] = {8, 16, 32, 4, 64, 100, 12, 24};
  for (int i = 0; i < 8; ++i) defs.push_back(FieldDef::Fixed("f" + std::to_string(i), sizes[i]));
  defs.push_back(FieldDef::Variable("v8"));
  defs.push_back(FieldDef::Variable("v9"));
  const SchemaId sid = store->create_schema("model", defs).value();
  std::vector<std::string> names;
  for (const auto& d : defs) names.push_back(d.name);

  std::mt19937_64 rng(20240601);
  auto value_for = [&](std::size_t field) {
    return field < 8 ? random_bytes(rng, sizes[field]) : random_bytes(rng, rng() % 60);
  };
  auto random_subset = [&] {
    std::vector<std::string> pick;
    for (const auto& n : names) {
      if (rng() % 3 == 0) pick.push_back(n);
    }
    return pick;  // empty selects every field
  };

  const std::uint64_t keyspace = 2000;
  ZipfGenerator zipf(keyspace, 0.99);
  auto key_name = [&](std::uint64_t rank) {
    char b[16];
    std::snprintf(b, sizeof(b), "k%05llu", static_cast<unsigned long long>((rank * 7919) % keyspace));
    return std::string(b);
  };

  ModelStore model;
  std::uint64_t divergences = 0, errors = 0;
  std::string first;
  auto diverge = [&](const std::string& what) {
    if (divergences++ == 0) first = what;
  };
  const int ops = 100'000;
  for (int i = 0; i < ops; ++i) {
    const std::string pk = key_name(zipf.next(rng));
    const HierKey key{sid, pk};
    const int r = static_cast<int>(rng() % 100);
    if (r < 20) {
      FieldMap row;
      for (std::size_t f = 0; f < names.size(); ++f) row[names[f]] = value_for(f);
      if (!store->put(key, row).ok()) ++errors;
      model.put(pk, row);
    } else if (r < 45) {
      FieldMap upd;
      const int n = 1 + static_cast<int>(rng() % 3);
      for (int j = 0; j < n; ++j) {
        const std::size_t f = rng() % names.size();
        upd[names[f]] = value_for(f);
      }
      const bool present = model.update(pk, upd);
      const Status st = store->update(key, upd);
      if (st.ok() != present || (!present && st.code() != ErrorCode::kKeyAbsent)) diverge(fmt("update %s op %d", pk.c_str(), i));
    } else if (r < 80) {
      const auto want = random_subset();
      auto got = store->get(key, want);
      const FieldMap* m = model.get(pk);
      if (m == nullptr) {
        if (got.code() != ErrorCode::kKeyAbsent) diverge(fmt("get absent %s op %d", pk.c_str(), i));
      } else if (!got.ok() || *got != project(*m, want)) {
        diverge(fmt("get %s op %d", pk.c_str(), i));
      }
    } else if (r < 90) {
      const auto want = random_subset();
      const std::size_t count = 1 + rng() % 20;
      auto got = store->scan(key, want, count);
      std::vector<ScanRow> expect;
      for (auto it = model.rows().lower_bound(pk); it != model.rows().end() && expect.size() < count; ++it) {
        expect.emplace_back(HierKey{sid, it->first}, project(it->second, want));
      }
      if (!got.ok() || *got != expect) diverge(fmt("scan from %s op %d", pk.c_str(), i));
    } else {
      model.del(pk);
      if (!store->del(key).ok()) ++errors;
    }
    if (i % 50 == 0) store->cache()->pump();
    if (i % 200 == 0) store->engine().drain_merges();
    if (i % 2000 == 0 && !store->engine().run_gc().ok()) ++errors;
  }
  // final sweep over the whole keyspace
  for (std::uint64_t r = 0; r < keyspace; ++r) {
    const std::string pk = key_name(r);
    auto got = store->get({sid, pk}, {});
    const FieldMap* m = model.get(pk);
    if ((m == nullptr) != (got.code() == ErrorCode::kKeyAbsent) || (m && (!got.ok() || *got != *m))) {
      diverge("final state " + pk);
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = divergences == 0 && errors == 0 && secs < kModelBudgetS;
  v.detail = fmt("%d ops, %llu divergences, %llu errors, gc reclaimed %llu B, %.1f s", ops,
                 static_cast<unsigned long long>(divergences), static_cast<unsigned long long>(errors),
                 static_cast<unsigned long long>(store->engine().stats().gc_reclaimed_bytes), secs);
  if (!first.empty()) v.detail += "; first: " + first;
  return v;
}

// ---------------------------------------------------------------------------------------------
// 2. Concurrency safety

// 32-byte self-checking value: 16-byte tag, then a digest binding tag, key and field.
std::string stamp_value(char kind, unsigned thread, std::uint64_t seq, const std::string& pk, unsigned field) {
  char tag[17];
  std::snprintf(tag, sizeof(tag), "%c%02u%013llu", kind, thread, static_cast<unsigned long long>(seq));
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(fnv1a(pk, fnv1a(std::string(tag, 16)) + field)));
  return std::string(tag, 16) + std::string(digest, 16);
}

bool value_intact(const std::string& v, const std::string& pk, unsigned field) {
  if (v.size() != 32) return false;
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(fnv1a(pk, fnv1a(v.substr(0, 16)) + field)));
  return v.compare(16, 16, digest) == 0;
}

Verdict concurrency() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr unsigned kThreads = 8, kFields = 10, kKeys = 1000;
  constexpr int kOps = 10'000;
  FocusOptions o = desk_options(true);
  o.pmem.capacity = 256ull << 20;
  o.swim.background = true;
  o.swim.worker_interval = std::chrono::milliseconds(1);
  o.cache.background = true;
  o.cache.capacity_bytes = 256 << 10;
  auto store = open_focus(o);
  const SchemaId sid = store->create_schema("conc", fixed_fields(kFields, 32)).value();
  auto pk_of = [](unsigned k) { return "c" + std::to_string(k); };

  for (unsigned k = 0; k < kKeys; ++k) {
    FieldValues row;
    for (unsigned f = 0; f < kFields; ++f) row.push_back(stamp_value('L', 99, 0, pk_of(k), f));
    if (!store->put_values({sid, pk_of(k)}, row).ok()) return {false, "preload failed"};
  }

  struct WriteRec {
    std::uint64_t start, end;
    std::string tag;
  };
  struct ReadRec {
    unsigned key;
    std::uint64_t start;
    FieldIdSet fields;
    FieldValues values;
  };
  std::atomic<std::uint64_t> clock{1};
  std::vector<std::vector<std::pair<std::pair<unsigned, unsigned>, WriteRec>>> writes(kThreads);
  std::vector<std::vector<ReadRec>> reads(kThreads);
  std::atomic<std::uint64_t> failures{0};
  std::mutex first_mu;
  std::string first;
  auto fail = [&](const char* op, const Status& st) {
    failures.fetch_add(1);
    std::lock_guard lock(first_mu);
    if (first.empty()) first = std::string(op) + ": " + st.ToString();
  };

  std::vector<std::thread> ts;
  for (unsigned t = 0; t < kThreads; ++t) {
    ts.emplace_back([&, t] {
      std::mt19937_64 rng(1000 + t);
      for (int i = 0; i < kOps; ++i) {
        const unsigned k = static_cast<unsigned>(rng() % kKeys);
        const std::string pk = pk_of(k);
        const HierKey key{sid, pk};
        const int r = static_cast<int>(rng() % 100);
        const std::uint64_t seq = static_cast<std::uint64_t>(i) + 1;
        if (r < 35) {
          // each thread owns one field, so the last writer per field is well defined
          const std::string v = stamp_value('U', t, seq, pk, t);
          const std::uint64_t s = clock.fetch_add(1);
          const Status st = store->update_values(key, {{static_cast<FieldId>(t), v}});
          const std::uint64_t e = clock.fetch_add(1);
          if (!st.ok()) fail("update", st);
          writes[t].push_back({{k, t}, {s, e, v.substr(0, 16)}});
        } else if (r < 40) {
          FieldValues row;
          for (unsigned f = 0; f < kFields; ++f) row.push_back(stamp_value('P', t, seq, pk, f));
          const std::uint64_t s = clock.fetch_add(1);
          const Status st = store->put_values(key, row);
          const std::uint64_t e = clock.fetch_add(1);
          if (!st.ok()) fail("put", st);
          for (unsigned f = 0; f < kFields; ++f) writes[t].push_back({{k, f}, {s, e, row[f].substr(0, 16)}});
        } else if (r < 95) {
          FieldIdSet fields;
          if (r < 85) {
            for (unsigned f = 0; f < kFields; ++f) fields.push_back(static_cast<FieldId>(f));
          } else {
            const auto a = static_cast<FieldId>(rng() % kFields), b = static_cast<FieldId>(rng() % kFields);
            fields = {std::min(a, b)};
            if (a != b) fields.push_back(std::max(a, b));
          }
          const std::uint64_t s = clock.fetch_add(1);
          auto got = store->get_values(key, fields);
          if (!got.ok()) {
            fail("get", got.status());
            continue;
          }
          reads[t].push_back({k, s, fields, std::move(got).value()});
        } else {
          const std::uint64_t s = clock.fetch_add(1);
          auto rows = store->scan_values(key, {}, 10);
          if (!rows.ok()) {
            fail("scan", rows.status());
            continue;
          }
          FieldIdSet all;
          for (unsigned f = 0; f < kFields; ++f) all.push_back(static_cast<FieldId>(f));
          for (auto& [hk, vals] : *rows) {
            reads[t].push_back({static_cast<unsigned>(std::stoul(hk.primary_key.substr(1))), s, all, std::move(vals)});
          }
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  store->engine().drain_merges();
  store->cache()->drain();

  // Audit
  std::map<std::pair<unsigned, unsigned>, std::vector<WriteRec>> by_cell;
  for (unsigned k = 0; k < kKeys; ++k) {
    for (unsigned f = 0; f < kFields; ++f) by_cell[{k, f}].push_back({0, 0, stamp_value('L', 99, 0, pk_of(k), f).substr(0, 16)});
  }
  for (auto& w : writes) {
    for (auto& [cell, rec] : w) by_cell[cell].push_back(std::move(rec));
  }
  auto find_write = [&](unsigned k, unsigned f, const std::string& v) -> const WriteRec* {
    for (const auto& w : by_cell[{k, f}]) {
      if (v.compare(0, 16, w.tag) == 0) return &w;
    }
    return nullptr;
  };
  // True when some write to the cell began after `w` ended and ended before `before`.
  auto superseded = [&](unsigned k, unsigned f, const WriteRec& w, std::uint64_t before) {
    for (const auto& o : by_cell[{k, f}]) {
      if (o.start > w.end && o.end < before) return true;
    }
    return false;
  };

  std::uint64_t torn = 0, phantom = 0, stale = 0, lost = 0, reads_checked = 0;
  for (const auto& rs : reads) {
    for (const auto& r : rs) {
      ++reads_checked;
      std::string put_tag[2];
      for (std::size_t i = 0; i < r.fields.size(); ++i) {
        const unsigned f = r.fields[i];
        const std::string& v = r.values[i];
        if (!value_intact(v, pk_of(r.key), f)) {
          ++torn;
          continue;
        }
        const WriteRec* w = find_write(r.key, f, v);
        if (w == nullptr) {
          ++phantom;
          continue;
        }
        if (superseded(r.key, f, *w, r.start) && stale++ == 0 && first.empty()) {
          first = fmt("stale read key %u field %u got %s (written %llu-%llu), read began %llu", r.key, f,
                      v.substr(0, 16).c_str(), static_cast<unsigned long long>(w->start),
                      static_cast<unsigned long long>(w->end), static_cast<unsigned long long>(r.start));
        }
        if (f >= 8) put_tag[f - 8] = v.substr(0, 16);
      }
      // fields 8 and 9 only change through whole-row puts
      if (!put_tag[0].empty() && !put_tag[1].empty() && put_tag[0].substr(1) != put_tag[1].substr(1)) ++torn;
    }
  }
  for (unsigned k = 0; k < kKeys; ++k) {
    auto row = store->get_values({sid, pk_of(k)}, {});
    if (!row.ok()) {
      ++lost;
      continue;
    }
    for (unsigned f = 0; f < kFields; ++f) {
      const WriteRec* w = find_write(k, f, (*row)[f]);
      if (w == nullptr || !value_intact((*row)[f], pk_of(k), f)) {
        ++phantom;
        continue;
      }
      if (superseded(k, f, *w, ~std::uint64_t{0})) ++lost;
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = torn == 0 && phantom == 0 && stale == 0 && lost == 0 && failures == 0 && secs < kConcurrencyBudgetS;
  v.detail = fmt("%u threads x %d ops on %u keys: %llu reads audited; lost %llu, torn %llu, stale %llu, phantom %llu, "
                 "op errors %llu; %llu merges; %.1f s",
                 kThreads, kOps, kKeys, static_cast<unsigned long long>(reads_checked),
                 static_cast<unsigned long long>(lost), static_cast<unsigned long long>(torn),
                 static_cast<unsigned long long>(stale), static_cast<unsigned long long>(phantom),
                 static_cast<unsigned long long>(failures.load()),
                 static_cast<unsigned long long>(store->engine().stats().merges), secs);
  if (!first.empty()) v.detail += "; first: " + first;
  return v;
}

// ---------------------------------------------------------------------------------------------
// 3. Crash recovery

struct CrashOp {
  enum Kind { kPut, kUpdate, kDel, kMerge, kGc } kind;
  std::string pk;
  FieldMap fields;
};

FocusOptions crash_options() {
  FocusOptions o = desk_options(false);
  o.pmem.capacity = 1 << 20;
  o.pmem.track_durability = true;
  o.plog.clog_extent = 4096;
  o.plog.dlog_extent = 2048;
  o.plog.schema_region_size = 4096;
  o.plog.gc_region_utilization = 0.0;
  o.plog.gc_live_ratio = 0.3;
  return o;
}

std::vector<FieldDef> crash_fields() {
  auto f = fixed_fields(8, 32);
  f.push_back(FieldDef::Variable("note"));
  return f;
}

Verdict crash_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kTrials = 1000, kKeys = 12, kScript = 30;
  const auto defs = crash_fields();
  std::uint64_t violations = 0, mid_op = 0, recover_errors = 0;
  std::string first;

  for (int trial = 0; trial < kTrials; ++trial) {
    std::mt19937_64 rng(trial * 7 + 1);
    auto row = [&] {
      FieldMap m;
      for (const auto& d : defs) m[d.name] = d.kind == FieldKind::kFixed ? random_bytes(rng, 32) : random_bytes(rng, rng() % 40);
      return m;
    };
    // script
    std::vector<FieldMap> preload;
    for (int k = 0; k < kKeys; ++k) preload.push_back(row());
    std::vector<CrashOp> script;
    for (int i = 0; i < kScript; ++i) {
      CrashOp op;
      op.pk = "key" + std::to_string(rng() % kKeys);
      const int r = static_cast<int>(rng() % 100);
      if (r < 30) {
        op.kind = CrashOp::kPut;
        op.fields = row();
      } else if (r < 70) {
        op.kind = CrashOp::kUpdate;
        const int n = 1 + static_cast<int>(rng() % 3);
        for (int j = 0; j < n; ++j) {
          const auto& d = defs[rng() % defs.size()];
          op.fields[d.name] = d.kind == FieldKind::kFixed ? random_bytes(rng, 32) : random_bytes(rng, rng() % 40);
        }
      } else if (r < 80) {
        op.kind = CrashOp::kDel;
      } else if (r < 93) {
        op.kind = CrashOp::kMerge;
      } else {
        op.kind = CrashOp::kGc;
      }
      script.push_back(std::move(op));
    }

    // One pass; returns the index of the op during which the armed crash fired (script size if none).
    auto run = [&](Focus& store, SchemaId sid, std::uint64_t arm_at) -> std::size_t {
      if (arm_at > 0) store.backend().arm_crash_after(arm_at);
      for (std::size_t i = 0; i < script.size(); ++i) {
        const CrashOp& op = script[i];
        const HierKey key{sid, op.pk};
        switch (op.kind) {
          case CrashOp::kPut: (void)store.put(key, op.fields); break;
          case CrashOp::kUpdate: (void)store.update(key, op.fields); break;
          case CrashOp::kDel: (void)store.del(key); break;
          case CrashOp::kMerge: store.engine().drain_merges(); break;
          case CrashOp::kGc: (void)store.engine().run_gc(); break;
        }
        if (arm_at > 0 && store.backend().crash_captured()) return i;
      }
      return script.size();
    };
    auto fresh = [&](SchemaId& sid) {
      auto store = open_focus(crash_options());
      sid = store->create_schema("crash", defs).value();
      for (int k = 0; k < kKeys; ++k) (void)store->put({sid, "key" + std::to_string(k)}, preload[k]);
      return store;
    };

    SchemaId sid = 0;
    std::uint64_t events = 0;
    {
      auto dry = fresh(sid);
      const std::uint64_t e0 = dry->backend().persistence_events();
      run(*dry, sid, 0);
      events = dry->backend().persistence_events() - e0;
    }
    if (events == 0) continue;
    auto live = fresh(sid);
    const std::uint64_t crash_at = 1 + rng() % events;
    const std::size_t inflight = run(*live, sid, crash_at);
    if (inflight >= script.size()) {
      ++violations;
      if (first.empty()) first = fmt("trial %d: crash point %llu never reached", trial, static_cast<unsigned long long>(crash_at));
      continue;
    }
    const std::string image = live->backend().take_crash_image();
    live.reset();

    // model before and after the in-flight op
    ModelStore before;
    for (int k = 0; k < kKeys; ++k) before.put("key" + std::to_string(k), preload[k]);
    auto apply = [](ModelStore& m, const CrashOp& op) {
      if (op.kind == CrashOp::kPut) m.put(op.pk, op.fields);
      if (op.kind == CrashOp::kUpdate) m.update(op.pk, op.fields);
      if (op.kind == CrashOp::kDel) m.del(op.pk);
    };
    for (std::size_t i = 0; i < inflight; ++i) apply(before, script[i]);
    ModelStore after = before;
    apply(after, script[inflight]);
    if (script[inflight].kind <= CrashOp::kDel) ++mid_op;

    auto backend = PmemBackend::from_image(image, false);
    if (!backend.ok()) {
      ++recover_errors;
      continue;
    }
    FocusOptions ro = crash_options();
    ro.pmem.track_durability = false;
    auto recovered = Focus::open_backend(std::move(backend).value(), ro);
    if (!recovered.ok()) {
      ++recover_errors;
      if (first.empty()) first = fmt("trial %d: reopen failed: %s", trial, recovered.status().ToString().c_str());
      continue;
    }
    Focus& r = **recovered;
    const SchemaDef* schema = r.registry().find("crash");
    if (schema == nullptr) {
      ++recover_errors;
      continue;
    }
    for (int k = 0; k < kKeys; ++k) {
      const std::string pk = "key" + std::to_string(k);
      auto got = r.get({schema->schema_id, pk}, {});
      auto matches = [&](const ModelStore& m) {
        const FieldMap* want = m.get(pk);
        return want == nullptr ? got.code() == ErrorCode::kKeyAbsent : (got.ok() && *got == *want);
      };
      if (!matches(before) && !(pk == script[inflight].pk && matches(after))) {
        ++violations;
        if (first.empty()) first = fmt("trial %d key %s, crash in op %zu", trial, pk.c_str(), inflight);
      }
    }
    // the recovered store keeps working
    if (!r.put({schema->schema_id, "post"}, preload[0]).ok() || *r.get({schema->schema_id, "post"}, {}) != preload[0]) {
      ++recover_errors;
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = violations == 0 && recover_errors == 0 && secs < kCrashBudgetS;
  v.detail = fmt("%d crash points (%llu inside a data op): %llu visibility violations, %llu recovery errors, %.1f s",
                 kTrials, static_cast<unsigned long long>(mid_op), static_cast<unsigned long long>(violations),
                 static_cast<unsigned long long>(recover_errors), secs);
  if (!first.empty()) v.detail += "; first: " + first;
  return v;
}

// ---------------------------------------------------------------------------------------------
// 4. Cacheline-aware flushing

Verdict cacheline_flush_exact() {
  auto store = open_focus(desk_options());
  SwimEngine& engine = store->engine();
  PmemBackend& backend = store->backend();
  const LogAddr window = 1ull << 20;
  constexpr std::uint64_t kWindow = 512;

  std::vector<MergeItem> items;
  for (std::uint64_t off = 0; off < kWindow; off += 24) {
    for (std::uint64_t size : {1, 24, 40, 64, 100}) {
      if (off + size <= kWindow) items.push_back({window + off, size});
    }
  }
  std::sort(items.begin(), items.end(), [](const MergeItem& a, const MergeItem& b) {
    return a.addr != b.addr ? a.addr < b.addr : a.size < b.size;
  });
  // line bitmap of one item within the 8-line window
  auto lines_of = [&](const MergeItem& it) {
    std::uint32_t m = 0;
    for (std::uint64_t b = it.addr - window; b < it.addr - window + it.size; ++b) m |= 1u << (b / 64);
    return m;
  };

  std::uint64_t lists = 0, mismatches = 0, over_naive = 0;
  std::vector<MergeItem> mlist;
  std::function<void(std::size_t)> extend = [&](std::size_t from) {
    if (!mlist.empty()) {
      std::uint32_t lines = 0;
      std::uint64_t naive = 0;
      for (const auto& it : mlist) {
        lines |= lines_of(it);
        naive += static_cast<std::uint64_t>(std::popcount(lines_of(it)));
      }
      const std::uint64_t before = backend.stats().cacheline_flushes;
      auto n = engine.cacheline_flush(mlist);
      const std::uint64_t issued = backend.stats().cacheline_flushes - before;
      ++lists;
      if (!n.ok() || *n != issued || issued != static_cast<std::uint64_t>(std::popcount(lines))) ++mismatches;
      if (issued > naive) ++over_naive;
    }
    if (mlist.size() == 4) return;
    for (std::size_t i = from; i < items.size(); ++i) {
      mlist.push_back(items[i]);
      extend(i);
      mlist.pop_back();
    }
  };
  extend(0);

  // 256-byte row of eight 32-byte fields, seven of them rewritten
  std::uint64_t worst = 0, naive_row = 0;
  for (int skip = 0; skip < 8; ++skip) {
    std::vector<MergeItem> row;
    for (int f = 0; f < 8; ++f) {
      if (f != skip) row.push_back({window + 32ull * f, 32});
    }
    worst = std::max<std::uint64_t>(worst, *engine.cacheline_flush(row));
    naive_row = row.size();
  }
  Verdict v;
  v.pass = mismatches == 0 && over_naive == 0 && worst <= 4 && naive_row == 7;
  v.detail = fmt("%llu sorted lists of <=4 items: %llu count mismatches, %llu above naive; 7/8 fields of a 256 B row: "
                 "%llu flushes vs %llu naive",
                 static_cast<unsigned long long>(lists), static_cast<unsigned long long>(mismatches),
                 static_cast<unsigned long long>(over_naive), static_cast<unsigned long long>(worst),
                 static_cast<unsigned long long>(naive_row));
  return v;
}

// ---------------------------------------------------------------------------------------------
// 5. Amplification and splitting

Verdict amplification() {
  const auto t0 = std::chrono::steady_clock::now();
  WorkloadSpec spec = workload_by_name("micro:readP").value();
  spec.record_count = 2000;
  spec.op_count = 10'000;
  FocusOptions o = desk_options(false);

  auto run = [&](EngineKind kind, OpKind op) -> AccessStats {
    auto store = open_engine(kind, o).value();
    const SchemaId sid = create_bench_schema(*store, spec).value();
    (void)preload(*store, sid, spec);
    store->reset_stats();
    OpGenerator gen(spec, 5);
    for (std::uint64_t i = 0; i < spec.op_count; ++i) {
      const Op g = gen.next();
      const HierKey key{sid, record_key(g.key)};
      if (op == OpKind::kReadPartial) {
        (void)store->get(key, {field_name(g.first_field)});
      } else {
        (void)store->get(key, {});
      }
    }
    return store->access_stats();
  };
  const AccessStats focus_p = run(EngineKind::kFocus, OpKind::kReadPartial);
  const AccessStats cons_p = run(EngineKind::kConsolidated, OpKind::kReadPartial);
  const AccessStats focus_f = run(EngineKind::kFocus, OpKind::kReadFull);
  const AccessStats scat_f = run(EngineKind::kScattered, OpKind::kReadFull);
  const double ratio = static_cast<double>(cons_p.bytes_touched) / static_cast<double>(focus_p.bytes_touched);
  const double scat_per = static_cast<double>(scat_f.kv_suboperations) / static_cast<double>(scat_f.ops);
  const double focus_per = static_cast<double>(focus_f.kv_suboperations) / static_cast<double>(focus_f.ops);
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = ratio >= kConsolidatedOverFocusMin && scat_f.kv_suboperations == 10 * spec.op_count &&
           focus_f.kv_suboperations == spec.op_count && secs < kRatioBudgetS;
  v.detail = fmt("partial get bytes touched consolidated/focus = %llu/%llu = %.2fx; full get sub-ops per op scattered "
                 "%.2f, focus %.2f; %.1f s",
                 static_cast<unsigned long long>(cons_p.bytes_touched),
                 static_cast<unsigned long long>(focus_p.bytes_touched), ratio, scat_per, focus_per, secs);
  return v;
}

// ---------------------------------------------------------------------------------------------
// 6. Restore point

Verdict restore_point() {
  FocusOptions o = desk_options(false);
  o.plog.dlog_extent = 1 << 20;  // keep DLog capacity out of the picture
  o.plog.clog_extent = 1 << 20;
  auto store = open_focus(o);
  const SchemaId sid = store->create_schema("restore", fixed_fields(8, 32)).value();
  const std::uint32_t threshold = store->engine().options().restore_threshold;

  std::uint64_t wrong_count = 0, over_cap = 0, cases = 0;
  std::size_t longest = 0;
  for (int n = 1; n <= 20; ++n) {
    // field patterns: always the same field, rotating fields, two fields at a time
    for (int pattern = 0; pattern < 3; ++pattern) {
      const HierKey key{sid, fmt("burst%02d_%d", n, pattern)};
      FieldValues row(8, std::string(32, 'r'));
      if (!store->put_values(key, row).ok()) return {false, "put failed"};
      const std::uint64_t r0 = store->engine().stats().restore_rewrites;
      // reference: chain counter that resets whenever it would pass the threshold
      std::uint32_t chain = 0;
      std::uint64_t expect_rewrites = 0;
      for (int i = 0; i < n; ++i) {
        FieldUpdates upd;
        if (pattern == 0) upd = {{0, std::string(32, static_cast<char>('a' + i))}};
        if (pattern == 1) upd = {{static_cast<FieldId>(i % 8), std::string(32, static_cast<char>('a' + i))}};
        if (pattern == 2) upd = {{static_cast<FieldId>(i % 8), std::string(32, 'x')}, {static_cast<FieldId>((i + 3) % 8), std::string(32, 'y')}};
        if (!store->update_values(key, upd).ok()) return {false, "update failed"};
        if (chain + 1 > threshold) {
          ++expect_rewrites;
          chain = 0;
        } else {
          ++chain;
        }
        const std::size_t rows = store->engine().chain_view(key)->rows.size();
        longest = std::max(longest, rows);
        if (rows > threshold + 1 || rows != chain + 1) ++over_cap;
      }
      ++cases;
      if (store->engine().stats().restore_rewrites - r0 != expect_rewrites) ++wrong_count;
    }
  }
  Verdict v;
  v.pass = wrong_count == 0 && over_cap == 0 && longest == threshold + 1;
  v.detail = fmt("%llu bursts of length 1-20: %llu with a wrong rewrite count, %llu chain-length violations, longest "
                 "chain %zu rows (threshold %u)",
                 static_cast<unsigned long long>(cases), static_cast<unsigned long long>(wrong_count),
                 static_cast<unsigned long long>(over_cap), longest, threshold);
  return v;
}

// ---------------------------------------------------------------------------------------------
// 7. Merge transparency

Verdict merge_transparency() {
  FocusOptions o = desk_options(false);
  o.pmem.capacity = 96ull << 20;
  o.plog.clog_extent = 1 << 20;
  o.plog.dlog_extent = 1 << 20;
  auto store = open_focus(o);
  const SchemaId sid = store->create_schema("merge", fixed_fields(8, 32)).value();
  SwimEngine& engine = store->engine();
  std::mt19937_64 rng(77);
  constexpr int kKeys = 10'000;

  std::uint64_t setup_errors = 0, diffs = 0, visits = 0, not_merged = 0;
  for (int k = 0; k < kKeys; ++k) {
    const HierKey key{sid, fmt("m%05d", k)};
    FieldValues row;
    for (int f = 0; f < 8; ++f) row.push_back(random_bytes(rng, 32));
    if (!store->put_values(key, row).ok()) ++setup_errors;
    const int deltas = 2 + k % 4;
    for (int d = 0; d < deltas; ++d) {
      FieldUpdates upd;
      for (int j = 0; j < 1 + static_cast<int>(rng() % 3); ++j) upd.emplace_back(static_cast<FieldId>(rng() % 8), random_bytes(rng, 32));
      if (!store->update_values(key, upd).ok()) ++setup_errors;
    }
    if (engine.chain_view(key)->rows.size() != static_cast<std::size_t>(deltas) + 1) ++setup_errors;

    const std::vector<FieldIdSet> subsets = {{static_cast<FieldId>(rng() % 8)}, {1, 4, 6}, {0, 7}};
    const FieldValues full_before = *engine.read_full(key);
    std::vector<FieldValues> partial_before;
    for (const auto& s : subsets) partial_before.push_back(*engine.read_partial(key, s));

    auto outcome = engine.merge_chain(key);
    if (!outcome.ok() || *outcome != MergeOutcome::kMerged) ++not_merged;

    if (*engine.read_full(key) != full_before) ++diffs;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      ReadTrace t;
      if (*engine.read_partial(key, subsets[i], &t) != partial_before[i]) ++diffs;
      if (t.rows_visited != 1) ++visits;
    }
  }
  Verdict v;
  v.pass = setup_errors == 0 && diffs == 0 && visits == 0 && not_merged == 0;
  v.detail = fmt("%d keys with 2-5 deltas: %llu read differences after merge, %llu partial reads visiting >1 row, %llu "
                 "not merged, %llu setup errors",
                 kKeys, static_cast<unsigned long long>(diffs), static_cast<unsigned long long>(visits),
                 static_cast<unsigned long long>(not_merged), static_cast<unsigned long long>(setup_errors));
  return v;
}

// ---------------------------------------------------------------------------------------------
// 8. Admission probability

Verdict admission() {
  const double threshold = SeaCacheOptions{}.hit_threshold;
  std::mt19937_64 rng(0xAD417);
  std::string detail;
  bool pass = true;
  for (double h : {0.1, 0.25, 0.4, 0.6}) {
    const int trials = 100'000;
    int admitted = 0;
    for (int i = 0; i < trials; ++i) admitted += should_admit(h, threshold, rng) ? 1 : 0;
    const double freq = static_cast<double>(admitted) / trials;
    const double expect = std::min(1.0, h / threshold);
    pass = pass && std::fabs(freq - expect) <= kAdmitTolerance;
    detail += fmt("H=%.2f: %.4f vs %.4f; ", h, freq, expect);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// ---------------------------------------------------------------------------------------------
// 9. Eviction under a scripted clock

struct ScriptedCache {
  ManualClock clock{1'000'000};
  std::unique_ptr<Focus> store;
  SchemaId sid = 0;

  ScriptedCache(std::uint64_t capacity, std::uint32_t rounds) {
    FocusOptions o = desk_options(true);
    o.cache.capacity_bytes = capacity;
    o.cache.max_evict_rounds = rounds;
    o.clock = &clock;
    store = open_focus(o);
    sid = store->create_schema("evict", fixed_fields(8, 32)).value();
  }
  HierKey key(std::uint64_t i) const { return {sid, fmt("e%06llu", static_cast<unsigned long long>(i))}; }
  void load(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) (void)store->put_values(key(i), FieldValues(8, std::string(32, 'e')));
  }
  std::uint64_t fill() {
    std::uint64_t n = 0;
    const SchemaDef& schema = *store->registry().get(sid);
    for (std::uint64_t i = 0;; ++i) {
      auto* e = store->index().find(key(i));
      if (e == nullptr || !store->cache()->admit(e, e->load(), schema).ok()) return n;
      ++n;
    }
  }
};

Verdict eviction() {
  std::string detail;
  // (a) saturated pass
  ScriptedCache a(512 << 10, 16);
  a.load(3000);
  const std::uint64_t slots = a.fill();
  const double full = a.store->cache()->usage();
  a.clock.advance_ms(5);
  a.store->cache()->evict_pass(0.8);
  const double after = a.store->cache()->usage();
  const double one_slot = full / static_cast<double>(slots);
  const bool halted = after <= 0.8 && after > 0.8 - one_slot;
  detail += fmt("saturated pass %.3f -> %.3f; ", full, after);

  // (b) one sweep with nothing stale
  ScriptedCache b(512 << 10, 1);
  b.load(3000);
  b.fill();
  b.store->cache()->set_hit_ratio(b.sid, 0.6);
  // trim below saturation so occupancy is not 1, then freeze the clock
  b.clock.advance_ms(1);
  b.store->cache()->evict_pass(0.85);
  b.store->cache()->set_fail_count(b.sid, 2);
  const SchemaStats s0 = b.store->cache()->schema_stats(b.sid);
  for (std::uint64_t i = 0; i < 3000; ++i) {
    // refresh every cached row at the frozen time
    auto* e = b.store->index().find(b.key(i));
    if ((e->load() >> 63) != 0) b.store->cache()->on_hit(b.sid, e->load());
  }
  b.store->cache()->pump();
  b.store->cache()->set_hit_ratio(b.sid, 0.6);
  const SchemaStats before = b.store->cache()->schema_stats(b.sid);
  const std::uint64_t evicted = b.store->cache()->evict_pass(0.0);
  const SchemaStats later = b.store->cache()->schema_stats(b.sid);
  const double l0 = lifetime_ms(before), l1 = lifetime_ms(later);
  const bool halves = evicted == 0 && later.fail_count == before.fail_count + 1 && s0.fail_count == 2 && l0 > 0 &&
                      l1 == l0 / 2 && l1 == std::ldexp(l0, -1);
  detail += fmt("empty sweep N %u -> %u, lifetime %.4f -> %.4f ms; ", before.fail_count, later.fail_count, l0, l1);

  // (c) hotspot shift
  ScriptedCache c(512 << 10, 16);
  constexpr std::uint64_t kRegion = 10'000;
  c.load(2 * kRegion);
  const std::uint64_t capacity_rows = (512ull << 10) / 304;
  ZipfGenerator zipf(kRegion, 0.99);
  std::mt19937_64 rng(99);
  auto access = [&](std::uint64_t base) {
    const std::uint64_t k = base + (zipf.next(rng) * 7919) % kRegion;
    ReadTrace t;
    (void)c.store->get_values(c.key(k), {}, &t);
    c.store->cache()->pump();
    c.clock.advance_us(100);
    return t.from_cache;
  };
  auto window_ratio = [&](std::uint64_t base, std::uint64_t n) {
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n; ++i) hits += access(base) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(n);
  };
  for (int w = 0; w < 20; ++w) window_ratio(0, capacity_rows);  // settle
  const double pre = window_ratio(0, 2 * capacity_rows);
  double best = 0;
  std::uint64_t recovered_at = 0;
  for (std::uint64_t w = 1; w <= 5; ++w) {
    const double r = window_ratio(kRegion, capacity_rows);
    best = std::max(best, r);
    if (recovered_at == 0 && r >= kHotspotRecovery * pre) recovered_at = w;
  }
  const bool recovers = recovered_at != 0;
  detail += fmt("hotspot shift: pre %.3f, best post-shift window %.3f, recovered in window %llu of 5 (window = %llu accesses)",
                pre, best, static_cast<unsigned long long>(recovered_at), static_cast<unsigned long long>(capacity_rows));
  return {halted && halves && recovers, detail};
}

// ---------------------------------------------------------------------------------------------
// 10. Cache transparency

Verdict cache_transparency() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = true;
  for (const char* name : {"B", "C"}) {
    WorkloadSpec spec = workload_by_name(name).value();
    spec.record_count = 10'000;
    spec.op_count = 100'000;
    struct Run {
      std::vector<std::uint64_t> digests;
      std::uint64_t log_bytes_read = 0;
      double hit_ratio = 0;
    };
    auto run = [&](bool cache) {
      FocusOptions o = desk_options(cache);
      o.pmem.capacity = 128ull << 20;
      o.cache.capacity_bytes = 4ull << 20;
      auto store = open_focus(o);
      const SchemaId sid = create_bench_schema(*store, spec).value();
      (void)preload(*store, sid, spec);
      if (cache) store->cache()->pump();
      store->reset_stats();
      Run r;
      OpGenerator gen(spec, 31);
      for (std::uint64_t i = 0; i < spec.op_count; ++i) {
        const Op op = gen.next();
        const HierKey key{sid, record_key(op.key)};
        if (op.kind == OpKind::kUpdate) {
          (void)store->update_values(key, {{static_cast<FieldId>(op.first_field), field_value(op.key, op.first_field, spec.field_size, i + 1)}});
          r.digests.push_back(0);
        } else {
          auto v = store->get_values(key, {});
          std::uint64_t h = v.ok() ? 1 : 2;
          if (v.ok()) {
            for (const auto& f : *v) h = fnv1a(f, h);
          }
          r.digests.push_back(h);
        }
        if (cache && i % 8 == 0) store->cache()->pump();
        if (i % 256 == 0) store->engine().drain_merges();
      }
      const StoreStats s = store->stats();
      r.log_bytes_read = s.bytes_read;
      r.hit_ratio = s.hit_ratio;
      return r;
    };
    const Run off = run(false);
    const Run on = run(true);
    const bool same = off.digests == on.digests;
    const double saving = 1.0 - static_cast<double>(on.log_bytes_read) / static_cast<double>(off.log_bytes_read);
    pass = pass && same && saving >= kCacheReadSavingMin;
    detail += fmt("%s: reads %s, log bytes read %llu -> %llu (-%.1f%%), hit ratio %.3f; ", name,
                  same ? "identical" : "DIFFER", static_cast<unsigned long long>(off.log_bytes_read),
                  static_cast<unsigned long long>(on.log_bytes_read), saving * 100, on.hit_ratio);
  }
  detail += fmt("%.1f s", seconds_since(t0));
  return {pass, detail};
}

// ---------------------------------------------------------------------------------------------
// 11. Thread scaling direction

Verdict thread_scaling() {
  WorkloadSpec spec = workload_by_name("C").value();
  spec.record_count = 10'000;
  spec.op_count = 200'000;
  FocusOptions o = desk_options(true);
  o.pmem.capacity = 64ull << 20;
  o.cache.background = true;
  o.swim.background = true;
  auto store = open_engine(EngineKind::kFocus, o).value();
  const SchemaId sid = create_bench_schema(*store, spec).value();
  (void)preload(*store, sid, spec);
  (void)run_workload(*store, sid, spec, 1, 1, "focus");  // warm the cache

  std::vector<double> tput;
  std::string detail;
  for (std::uint32_t threads : {1u, 2u, 4u, 8u}) {
    std::vector<double> reps;
    for (int rep = 0; rep < 3; ++rep) reps.push_back(run_workload(*store, sid, spec, threads, 7 + rep, "focus")->ops_per_s);
    std::sort(reps.begin(), reps.end());
    tput.push_back(reps[1]);
    detail += fmt("%uT %.0f ops/s; ", threads, reps[1]);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < tput.size(); ++i) monotone = monotone && tput[i] >= tput[i - 1] * (1.0 - kScalingNoise);
  const unsigned hw = std::thread::hardware_concurrency();
  detail += fmt("host hardware threads: %u", hw);
  Verdict v{monotone, detail};
  v.hardware_bound = hw < 8;
  return v;
}

}  // namespace

// Optional arguments pick criteria by number; no arguments runs all of them.
int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    Verdict (*run)();
  };
  const Criterion criteria[] = {
      {"model-oracle equivalence", model_oracle},
      {"concurrency safety", concurrency},
      {"crash recovery", crash_recovery},
      {"cacheline-aware flush exactness", cacheline_flush_exact},
      {"amplification and splitting ratios", amplification},
      {"restore point", restore_point},
      {"merge transparency", merge_transparency},
      {"admission probability", admission},
      {"eviction under scripted clock", eviction},
      {"cache transparency", cache_transparency},
      {"thread scaling direction", thread_scaling},
  };
  int counted_failures = 0;
  int index = 0;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  for (const auto& c : criteria) {
    ++index;
    if (!only.empty() && !only.contains(index)) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const char* note = "";
    if (!v.pass && v.hardware_bound) {
      note = " [needs 8 cores; not counted]";
    } else if (!v.pass) {
      ++counted_failures;
    }
    std::printf("%s %2d %s: %s%s\n", v.pass ? "PASS" : "FAIL", index, c.name, v.detail.c_str(), note);
    std::fflush(stdout);
  }
  return counted_failures == 0 ? 0 : 1;
}
