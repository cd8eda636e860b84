#include <gtest/gtest.h>

#include <random>

#include "focus/kv_api.hpp"
#include "support.hpp"

using namespace focus;
using namespace focus::testing;

namespace {

std::vector<FieldDef> user_fields() {
  return {FieldDef::Fixed("id", 8), FieldDef::Variable("name"), FieldDef::Fixed("age", 2), FieldDef::Variable("bio")};
}

FieldMap user(int i, const std::string& bio = "") {
  char id[9];
  std::snprintf(id, sizeof(id), "%08d", i);
  return {{"id", id}, {"name", "user" + std::to_string(i)}, {"age", "42"}, {"bio", bio.empty() ? std::string(30, 'b') : bio}};
}

std::vector<std::unique_ptr<RecordStore>> all_stores(bool cache) {
  std::vector<std::unique_ptr<RecordStore>> out;
  out.push_back(open_focus(desk_options(cache)));
  out.push_back(MappedStore::open(MappedStore::Mapping::kConsolidated, desk_options(cache)).value());
  out.push_back(MappedStore::open(MappedStore::Mapping::kScattered, desk_options(cache)).value());
  return out;
}

}  // namespace

TEST(KvApi, NamedFieldOperations) {
  auto s = open_focus(desk_options());
  const SchemaId sid = s->create_schema("users", user_fields()).value();
  const HierKey k{sid, "u1"};
  ASSERT_TRUE(s->put(k, user(1)).ok());
  EXPECT_EQ(*s->get(k, {}), user(1));
  EXPECT_EQ(*s->get(k, {"age", "name"}), (FieldMap{{"age", "42"}, {"name", "user1"}}));
  ASSERT_TRUE(s->update(k, {{"bio", "short"}}).ok());
  EXPECT_EQ(s->get(k, {"bio"})->at("bio"), "short");
  EXPECT_EQ(s->update(k, {{"zzz", "x"}}).code(), ErrorCode::kUnknownFieldName);
  EXPECT_EQ(s->update(k, {}).code(), ErrorCode::kEmptyFieldSet);
  EXPECT_EQ(s->update(HierKey{sid, "nobody"}, {{"age", "11"}}).code(), ErrorCode::kKeyAbsent);
  EXPECT_EQ(s->put(k, {{"id", "1"}}).code(), ErrorCode::kMissingFieldValue);
  EXPECT_EQ(s->get(HierKey{999, "u1"}, {}).code(), ErrorCode::kUnknownSchema);
  ASSERT_TRUE(s->del(k).ok());
  EXPECT_EQ(s->get(k, {}).code(), ErrorCode::kKeyAbsent);
}

TEST(KvApi, UpdateCoveringEveryFieldActsAsPut) {
  auto s = open_focus(desk_options());
  const SchemaId sid = s->create_schema("users", user_fields()).value();
  const HierKey k{sid, "u1"};
  ASSERT_TRUE(s->put(k, user(1)).ok());
  ASSERT_TRUE(s->update(k, user(2)).ok());
  EXPECT_EQ(*s->get(k, {}), user(2));
  EXPECT_EQ(s->engine().chain_view(k)->rows.size(), 1u);
}

TEST(KvApi, ScanStaysInsideSchema) {
  auto s = open_focus(desk_options());
  const SchemaId a = s->create_schema("a", user_fields()).value();
  const SchemaId b = s->create_schema("b", user_fields()).value();
  for (int i = 0; i < 20; ++i) {
    ASSERT_TRUE(s->put(HierKey{a, "k" + std::to_string(100 + i)}, user(i)).ok());
    ASSERT_TRUE(s->put(HierKey{b, "k" + std::to_string(100 + i)}, user(i + 50)).ok());
  }
  ASSERT_TRUE(s->del(HierKey{a, "k105"}).ok());
  auto rows = s->scan(HierKey{a, "k110"}, {"name"}, 100);
  ASSERT_TRUE(rows.ok());
  ASSERT_EQ(rows->size(), 10u);
  EXPECT_EQ(rows->front().first.primary_key, "k110");
  EXPECT_EQ(rows->front().second, (FieldMap{{"name", "user10"}}));
  rows = s->scan(HierKey{a, "k100"}, {}, 7);
  ASSERT_EQ(rows->size(), 7u);
  EXPECT_EQ((*rows)[5].first.primary_key, "k106");  // k105 deleted
}

TEST(KvApi, SerializedRecordRoundTrips) {
  const SchemaDef s = layout_schema(1, "u", user_fields()).value();
  const std::string blob = serialize_record(s, user(7));
  EXPECT_EQ(*deserialize_record(s, blob), user(7));
  EXPECT_FALSE(deserialize_record(s, blob.substr(0, blob.size() - 1)).ok());
}

// Same random history against every engine: identical answers.
TEST(KvApi, EnginesAgreeOnRandomHistory) {
  for (bool cache : {false, true}) {
    auto stores = all_stores(cache);
    std::vector<SchemaId> sids;
    for (auto& s : stores) sids.push_back(s->create_schema("users", user_fields()).value());
    ModelStore model;
    std::mt19937_64 rng(21);
    const std::vector<std::string> names = {"id", "name", "age", "bio"};
    for (int i = 0; i < 3000; ++i) {
      const int k = static_cast<int>(rng() % 60);
      const std::string pk = "p" + std::to_string(k);
      const int op = static_cast<int>(rng() % 10);
      if (op < 3) {
        const FieldMap v = user(static_cast<int>(rng() % 1000), std::string(rng() % 40, static_cast<char>('a' + rng() % 26)));
        for (std::size_t e = 0; e < stores.size(); ++e) ASSERT_TRUE(stores[e]->put({sids[e], pk}, v).ok());
        model.put(pk, v);
      } else if (op < 5) {
        FieldMap upd{{names[rng() % 4 == 0 ? 3 : 1], std::string(rng() % 20, 'u')}};
        const bool present = model.update(pk, upd);
        for (std::size_t e = 0; e < stores.size(); ++e) {
          ASSERT_EQ(stores[e]->update({sids[e], pk}, upd).ok(), present) << e;
        }
      } else if (op < 8) {
        std::vector<std::string> want;
        if (rng() % 2) want = {names[rng() % 4]};
        const FieldMap* m = model.get(pk);
        for (std::size_t e = 0; e < stores.size(); ++e) {
          auto got = stores[e]->get({sids[e], pk}, want);
          ASSERT_EQ(got.ok(), m != nullptr) << e;
          if (m) ASSERT_EQ(*got, project(*m, want)) << "engine " << e << " op " << i;
        }
      } else if (op < 9) {
        std::vector<std::vector<ScanRow>> answers;
        for (std::size_t e = 0; e < stores.size(); ++e) {
          auto rows = stores[e]->scan({sids[e], pk}, {"name"}, 5);
          ASSERT_TRUE(rows.ok());
          for (auto& r : *rows) r.first.schema_id = 0;
          answers.push_back(*rows);
        }
        EXPECT_EQ(answers[0], answers[1]);
        EXPECT_EQ(answers[0], answers[2]);
      } else {
        const bool present = model.del(pk);
        for (std::size_t e = 0; e < stores.size(); ++e) {
          const Status st = stores[e]->del({sids[e], pk});
          if (!present) continue;
          ASSERT_TRUE(st.ok()) << e;
        }
      }
      for (auto& s : stores) {
        if (auto* f = dynamic_cast<Focus*>(s.get()); f && f->cache()) f->cache()->pump();
      }
    }
  }
}

TEST(KvApi, SuboperationAccounting) {
  FocusOptions o = desk_options();
  auto focus = open_focus(o);
  auto scattered = MappedStore::open(MappedStore::Mapping::kScattered, o).value();
  auto consolidated = MappedStore::open(MappedStore::Mapping::kConsolidated, o).value();
  for (RecordStore* s : std::vector<RecordStore*>{focus.get(), scattered.get(), consolidated.get()}) {
    const SchemaId sid = s->create_schema("u", user_fields()).value();
    ASSERT_TRUE(s->put({sid, "a"}, user(1)).ok());
    s->reset_stats();
    ASSERT_TRUE(s->get({sid, "a"}, {}).ok());
    ASSERT_TRUE(s->update({sid, "a"}, {{"age", "77"}}).ok());
  }
  EXPECT_EQ(focus->access_stats().kv_suboperations, 2u);
  EXPECT_EQ(scattered->access_stats().kv_suboperations, 4u + 1u);
  EXPECT_EQ(consolidated->access_stats().kv_suboperations, 1u + 2u);
}

TEST(KvApi, ReopenFromFileKeepsData) {
  const std::string path = ::testing::TempDir() + "focus_kv_reopen.img";
  std::remove(path.c_str());
  FocusOptions o = desk_options(true);
  o.pmem.path = path;
  o.pmem.capacity = 16 << 20;
  {
    auto s = open_focus(o);
    const SchemaId sid = s->create_schema("users", user_fields()).value();
    for (int i = 0; i < 50; ++i) ASSERT_TRUE(s->put({sid, "u" + std::to_string(i)}, user(i)).ok());
    ASSERT_TRUE(s->update({sid, "u3"}, {{"name", "renamed"}}).ok());
  }
  auto s = open_focus(o);
  const SchemaDef* schema = s->registry().find("users");
  ASSERT_NE(schema, nullptr);
  FieldMap expect = user(3);
  expect["name"] = "renamed";
  EXPECT_EQ(*s->get({schema->schema_id, "u3"}, {}), expect);
  EXPECT_EQ(*s->get({schema->schema_id, "u49"}, {}), user(49));
  std::remove(path.c_str());
}
