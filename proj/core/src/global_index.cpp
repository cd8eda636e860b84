#include "focus/global_index.hpp"

#include <cstring>

namespace focus {

std::uint64_t pack_index_value(const IndexValue& v) {
  if (v.loc.tag == LocTag::kLog) {
    const std::uint64_t cl = std::min<std::uint32_t>(v.chain_len, kMaxChainLen);
    return (cl << 48) | (v.loc.log_addr & kMaxIndexedAddr);
  }
  return (std::uint64_t{1} << 63) | (std::uint64_t{v.loc.cache.gen} << 40) |
         (std::uint64_t{v.loc.cache.page & 0xFFFFFFu} << 16) | v.loc.cache.slot;
}

IndexValue unpack_index_value(std::uint64_t word) {
  IndexValue v;
  if ((word >> 63) == 0) {
    v.loc = Location::Log(word & kMaxIndexedAddr);
    v.chain_len = static_cast<std::uint32_t>((word >> 48) & 0xFF);
  } else {
    CacheRef ref;
    ref.gen = static_cast<std::uint8_t>(word >> 40);
    ref.page = static_cast<std::uint32_t>((word >> 16) & 0xFFFFFF);
    ref.slot = static_cast<std::uint16_t>(word);
    v.loc = Location::Cache(ref);
  }
  return v;
}

struct GlobalIndex::Node {
  Entry entry;
  Node* alloc_next = nullptr;
  int height;
  std::atomic<Node*> next[1];  // `height` slots follow

  Node(std::string key, std::uint64_t word, int h) : entry(std::move(key), word), height(h) {}
  Node* load_next(int level) const { return next[level].load(std::memory_order_acquire); }
};

namespace {

int compare_keys(std::string_view a, std::string_view b) { return a.compare(b); }

thread_local std::minstd_rand height_rng{std::random_device{}()};

}  // namespace

HierKey GlobalIndex::Entry::key() const {
  auto k = HierKey::decode(key_);
  return k.ok() ? std::move(k).value() : HierKey{};
}

std::optional<IndexValue> GlobalIndex::Entry::value() const {
  const std::uint64_t w = load();
  if (w == kAbsentWord) return std::nullopt;
  return unpack_index_value(w);
}

GlobalIndex::GlobalIndex() { head_ = new_node(std::string(), kAbsentWord, kMaxHeight); }

GlobalIndex::~GlobalIndex() {
  Node* n = allocations_.load();
  while (n != nullptr) {
    Node* next = n->alloc_next;
    n->~Node();
    ::operator delete(n);
    n = next;
  }
}

GlobalIndex::Node* GlobalIndex::new_node(std::string key, std::uint64_t word, int height) {
  const std::size_t bytes = sizeof(Node) + sizeof(std::atomic<Node*>) * (height - 1);
  void* mem = ::operator new(bytes);
  Node* n = new (mem) Node(std::move(key), word, height);
  for (int i = 1; i < height; ++i) new (&n->next[i]) std::atomic<Node*>(nullptr);
  n->next[0].store(nullptr, std::memory_order_relaxed);
  Node* head = allocations_.load(std::memory_order_relaxed);
  do {
    n->alloc_next = head;
  } while (!allocations_.compare_exchange_weak(head, n, std::memory_order_release, std::memory_order_relaxed));
  return n;
}

int GlobalIndex::random_height() {
  int h = 1;
  while (h < kMaxHeight && height_rng() % 4 == 0) ++h;
  return h;
}

GlobalIndex::Node* GlobalIndex::find_ge(std::string_view key, Node** prev) const {
  Node* x = head_;
  int level = max_height_.load(std::memory_order_relaxed) - 1;
  for (;;) {
    Node* next = x->load_next(level);
    if (next != nullptr && compare_keys(next->entry.key_, key) < 0) {
      x = next;
      continue;
    }
    if (prev != nullptr) prev[level] = x;
    if (level == 0) return next;
    --level;
  }
}

GlobalIndex::Entry* GlobalIndex::find(const HierKey& key) const {
  probes_.add();
  const std::string k = key.encode();
  Node* n = find_ge(k, nullptr);
  if (n != nullptr && n->entry.key_ == k) return &n->entry;
  return nullptr;
}

std::optional<IndexValue> GlobalIndex::get(const HierKey& key) const {
  Entry* e = find(key);
  return e == nullptr ? std::nullopt : e->value();
}

std::pair<GlobalIndex::Entry*, bool> GlobalIndex::insert_entry(const HierKey& key, const IndexValue& value) {
  const std::string k = key.encode();
  const std::uint64_t word = pack_index_value(value);
  Node* prev[kMaxHeight];
  for (;;) {
    for (auto& p : prev) p = head_;
    Node* n = find_ge(k, prev);
    if (n != nullptr && n->entry.key_ == k) {
      std::uint64_t expected = kAbsentWord;
      if (n->entry.compare_exchange(expected, word)) {
        live_.fetch_add(1, std::memory_order_relaxed);
        return {&n->entry, true};
      }
      return {&n->entry, false};
    }

    const int height = random_height();
    int cur = max_height_.load(std::memory_order_relaxed);
    while (height > cur && !max_height_.compare_exchange_weak(cur, height, std::memory_order_relaxed)) {
    }
    Node* node = new_node(k, word, height);
    node->next[0].store(n, std::memory_order_relaxed);
    if (!prev[0]->next[0].compare_exchange_strong(n, node, std::memory_order_release, std::memory_order_acquire)) {
      // Lost a race at level 0; the orphaned node stays on the allocation list and is never linked.
      node->entry.word_.store(kAbsentWord, std::memory_order_relaxed);
      continue;
    }
    live_.fetch_add(1, std::memory_order_relaxed);
    for (int level = 1; level < height; ++level) {
      for (;;) {
        Node* p = prev[level];
        Node* succ = p->load_next(level);
        while (succ != nullptr && compare_keys(succ->entry.key_, k) < 0) {
          p = succ;
          succ = p->load_next(level);
        }
        node->next[level].store(succ, std::memory_order_relaxed);
        if (p->next[level].compare_exchange_strong(succ, node, std::memory_order_release, std::memory_order_acquire)) {
          break;
        }
        prev[level] = p;
      }
    }
    return {&node->entry, true};
  }
}

bool GlobalIndex::insert(const HierKey& key, const IndexValue& value) { return insert_entry(key, value).second; }

bool GlobalIndex::remove(const HierKey& key) {
  Entry* e = find(key);
  if (e == nullptr) return false;
  std::uint64_t w = e->load();
  while (w != kAbsentWord) {
    if (e->compare_exchange(w, kAbsentWord)) {
      live_.fetch_sub(1, std::memory_order_relaxed);
      return true;
    }
  }
  return false;
}

bool GlobalIndex::remove_entry(Entry* entry, std::uint64_t expected) {
  if (expected == kAbsentWord || !entry->compare_exchange(expected, kAbsentWord)) return false;
  live_.fetch_sub(1, std::memory_order_relaxed);
  return true;
}

Result<bool> GlobalIndex::cas_update(const HierKey& key, const IndexValue& expected, const IndexValue& desired) {
  Entry* e = find(key);
  if (e == nullptr || e->load() == kAbsentWord) return Status(ErrorCode::kKeyAbsent);
  std::uint64_t w = pack_index_value(expected);
  return e->compare_exchange(w, pack_index_value(desired));
}

void GlobalIndex::Iterator::skip_dead() {
  auto* n = static_cast<Node*>(node_);
  while (n != nullptr && n->entry.load() == kAbsentWord) n = n->load_next(0);
  node_ = n;
}

void GlobalIndex::Iterator::seek(const HierKey& start) {
  index_.probes_.add();
  node_ = index_.find_ge(start.encode(), nullptr);
  skip_dead();
}

void GlobalIndex::Iterator::next() {
  node_ = static_cast<Node*>(node_)->load_next(0);
  skip_dead();
}

GlobalIndex::Entry* GlobalIndex::Iterator::entry() const { return &static_cast<Node*>(node_)->entry; }

std::vector<std::pair<HierKey, IndexValue>> GlobalIndex::range_iter(const HierKey& start, std::size_t limit) const {
  std::vector<std::pair<HierKey, IndexValue>> out;
  if (limit == 0) return out;
  Iterator it(*this);
  for (it.seek(start); it.valid() && out.size() < limit; it.next()) {
    auto v = it.entry()->value();
    if (v) out.emplace_back(it.entry()->key(), *v);
  }
  return out;
}

}  // namespace focus
