#include <gtest/gtest.h>

#include "focus/pmem_backend.hpp"

using namespace focus;

namespace {

std::unique_ptr<PmemBackend> tracked(std::uint64_t capacity = 4096) {
  PmemOptions o;
  o.capacity = capacity;
  o.track_durability = true;
  return PmemBackend::open(o).value();
}

}  // namespace

TEST(PmemBackend, WritesVisibleBeforeDurable) {
  auto b = tracked();
  ASSERT_TRUE(b->write_at(100, "hello").ok());
  EXPECT_EQ(*b->read(100, 5), "hello");
  EXPECT_EQ(b->simulate_crash().substr(100, 5), std::string(5, '\0'));
}

TEST(PmemBackend, DurableOnlyAfterFlushAndFence) {
  auto b = tracked();
  ASSERT_TRUE(b->write_at(60, "abcdefgh").ok());  // straddles lines 0 and 1
  ASSERT_TRUE(b->flush(0).ok());
  EXPECT_EQ(b->simulate_crash().substr(60, 8), std::string(8, '\0'));  // flushed, not fenced
  b->fence();
  EXPECT_EQ(b->simulate_crash().substr(60, 8), std::string("abcd") + std::string(4, '\0'));
  ASSERT_TRUE(b->flush(64).ok());
  b->fence();
  EXPECT_EQ(b->simulate_crash().substr(60, 8), "abcdefgh");
}

TEST(PmemBackend, RewriteAfterFlushStaysVolatile) {
  auto b = tracked();
  ASSERT_TRUE(b->write_at(0, "old").ok());
  ASSERT_TRUE(b->flush(0).ok());
  ASSERT_TRUE(b->write_at(0, "new").ok());
  b->fence();
  EXPECT_EQ(b->simulate_crash().substr(0, 3), std::string(3, '\0'));
  ASSERT_TRUE(b->persist(0, "new").ok());
  EXPECT_EQ(b->simulate_crash().substr(0, 3), "new");
}

TEST(PmemBackend, CountersAndBounds) {
  PmemOptions o;
  o.capacity = 4096;
  auto b = PmemBackend::open(o).value();
  ASSERT_TRUE(b->write_at(10, std::string(300, 'x')).ok());
  ASSERT_TRUE(b->flush_range(10, 300).ok());  // lines 0..4
  b->fence();
  ASSERT_TRUE(b->read(250, 10).ok());  // spans two 256-byte blocks
  const FlushStats s = b->stats();
  EXPECT_EQ(s.cacheline_flushes, 5u);
  EXPECT_EQ(s.fences, 1u);
  EXPECT_EQ(s.bytes_written, 300u);
  EXPECT_EQ(s.bytes_read, 10u);
  EXPECT_EQ(s.reads_256b_rounded, 512u);
  EXPECT_EQ(b->flush(3).code(), ErrorCode::kUnalignedFlush);
  EXPECT_EQ(b->write_at(4090, "0123456789").code(), ErrorCode::kOutOfRange);
  EXPECT_EQ(b->read(5000, 1).code(), ErrorCode::kOutOfRange);
}

TEST(PmemBackend, FetchOrReturnsPrior) {
  auto b = tracked();
  ASSERT_TRUE(b->write_at(8, std::string("\x01\x00", 2)).ok());
  EXPECT_EQ(*b->fetch_or_u16(8, 0x8000), 1);
  EXPECT_EQ(*b->fetch_or_u16(8, 0x8000), 0x8001);
  EXPECT_EQ(b->fetch_or_u16(9, 1).code(), ErrorCode::kOutOfRange);
}

TEST(PmemBackend, ArmedCrashCapturesDurableStateAtEvent) {
  auto b = tracked();
  b->arm_crash_after(3);  // write, flush, fence
  ASSERT_TRUE(b->persist(0, "first").ok());
  ASSERT_TRUE(b->persist(128, "second").ok());
  ASSERT_TRUE(b->crash_captured());
  const std::string img = b->take_crash_image();
  EXPECT_EQ(img.substr(0, 5), "first");
  EXPECT_EQ(img.substr(128, 6), std::string(6, '\0'));

  auto revived = PmemBackend::from_image(img, true).value();
  EXPECT_EQ(*revived->read(0, 5), "first");
  EXPECT_EQ(revived->simulate_crash(), img);
}

TEST(PmemBackend, FileBackedRegionPersistsAcrossOpen) {
  const std::string path = ::testing::TempDir() + "focus_pmem_test.img";
  std::remove(path.c_str());
  PmemOptions o;
  o.path = path;
  o.capacity = 8192;
  {
    auto b = PmemBackend::open(o).value();
    ASSERT_TRUE(b->persist(4000, "durable").ok());
  }
  auto b = PmemBackend::open(o).value();
  EXPECT_EQ(*b->read(4000, 7), "durable");
  std::remove(path.c_str());
}
