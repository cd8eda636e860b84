#include <benchmark/benchmark.h>

#include "focus/bench_runner.hpp"
#include "focus/global_index.hpp"
#include "focus/record_codec.hpp"
#include "focus/swim_engine.hpp"

using namespace focus;

namespace {

WorkloadSpec desk_spec(std::uint64_t records) {
  WorkloadSpec spec = workload_by_name("C").value();
  spec.record_count = records;
  return spec;
}

struct Loaded {
  std::unique_ptr<Focus> store;
  SchemaId schema = 0;
  WorkloadSpec spec;
};

Loaded load(std::uint64_t records, bool cache) {
  FocusOptions options;
  options.pmem.capacity = 256ull << 20;
  options.cache_enabled = cache;
  options.cache.capacity_bytes = 32ull << 20;
  Loaded l;
  l.spec = desk_spec(records);
  l.store = Focus::open(options).value();
  l.schema = create_bench_schema(*l.store, l.spec).value();
  (void)preload(*l.store, l.schema, l.spec);
  return l;
}

void BM_ReadFull(benchmark::State& state) {
  Loaded l = load(10'000, state.range(0) != 0);
  OpGenerator gen(l.spec, 7);
  for (auto _ : state) {
    auto v = l.store->get_values(HierKey{l.schema, record_key(gen.next().key)}, {});
    benchmark::DoNotOptimize(v);
  }
  state.counters["log_bytes_read"] = static_cast<double>(l.store->stats().bytes_read);
}
BENCHMARK(BM_ReadFull)->Arg(0)->Arg(1);

void BM_ReadPartial(benchmark::State& state) {
  Loaded l = load(10'000, false);
  OpGenerator gen(l.spec, 7);
  for (auto _ : state) {
    auto v = l.store->get_values(HierKey{l.schema, record_key(gen.next().key)}, {3});
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_ReadPartial);

void BM_UpdatePartial(benchmark::State& state) {
  Loaded l = load(10'000, false);
  OpGenerator gen(l.spec, 7);
  std::uint64_t salt = 1;
  for (auto _ : state) {
    const Op op = gen.next();
    Status st = l.store->update_values(HierKey{l.schema, record_key(op.key)},
                                       {{op.first_field % 10, field_value(op.key, op.first_field, 100, ++salt)}});
    benchmark::DoNotOptimize(st);
  }
}
BENCHMARK(BM_UpdatePartial);

void BM_IndexFind(benchmark::State& state) {
  GlobalIndex index;
  const auto n = static_cast<std::uint64_t>(state.range(0));
  for (std::uint64_t i = 0; i < n; ++i) (void)index.insert(HierKey{1, record_key(i)}, IndexValue{Location::Log(64 * i), 0});
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.get(HierKey{1, record_key((i++ * 7919) % n)}));
  }
}
BENCHMARK(BM_IndexFind)->Arg(1 << 12)->Arg(1 << 16);

}  // namespace

BENCHMARK_MAIN();
