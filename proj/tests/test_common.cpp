#include <gtest/gtest.h>

#include <set>

#include "hammersim/common.hpp"
#include "hammersim/timing.hpp"

using namespace hammersim;

TEST(Fnv1a, PublishedVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
}

TEST(DeriveSeed, NamedStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (const char* n : {"federation", "noise", "agent", "layout", "vulnerability"}) seen.insert(derive_seed(1, n));
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_EQ(derive_seed(7, "layout"), derive_seed(7, "layout"));
  EXPECT_NE(derive_seed(7, 1, 2), derive_seed(7, 2, 1));
}

TEST(Rng, DeterministicAndBounded) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng r(3);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
}

TEST(Arithmetic, CeilFractionAbsorbsRepresentationError) {
  EXPECT_EQ(ceil_fraction(0.001, 8'700'000), 8700u);
  EXPECT_EQ(ceil_fraction(0.0005, 6'700'000), 3350u);
  EXPECT_EQ(ceil_fraction(0.5, 3), 2u);
  EXPECT_EQ(ceil_fraction(0.67, 3), 3u);
  EXPECT_EQ(ceil_fraction(0.9, 10), 9u);
  EXPECT_EQ(floor_product(0.5, 4.0), 2u);
  EXPECT_EQ(floor_product(0.695, 296204.0), 205861u);
}

TEST(LittleEndian, RoundTrip) {
  std::string buf;
  append_le<std::uint32_t>(buf, 0x01020304u);
  append_le<float>(buf, 1.5f);
  EXPECT_EQ(static_cast<unsigned char>(buf[0]), 0x04);
  std::size_t pos = 0;
  EXPECT_EQ(read_le<std::uint32_t>(buf, pos), 0x01020304u);
  EXPECT_EQ(read_le<float>(buf, pos), 1.5f);
  EXPECT_THROW(read_le<std::uint8_t>(buf, pos), ConfigError);
}

TEST(Bandwidth, BinaryMegaReading) {
  BandwidthModel bw;
  EXPECT_EQ(bw.bits_per_second(), 2400ull * 1048576ull * 64ull);
  EXPECT_DOUBLE_EQ(bw.bytes_per_second(), 20132659200.0);
  EXPECT_DOUBLE_EQ(bw.window_bytes(seconds_to_ps(0.064)), 1288490188.8);
  BandwidthModel narrow{2400, 8};
  EXPECT_DOUBLE_EQ(narrow.bytes_per_second() * 8.0, bw.bytes_per_second());
}

TEST(Bandwidth, TransferTimeFloorsToPicoseconds) {
  BandwidthModel bw;
  EXPECT_EQ(bw.transfer_ps(0), 0u);
  // 34800 bits at 161061273600 bit/s is 216066.837 ps.
  EXPECT_EQ(bw.transfer_ps(34800), 216066u);
  EXPECT_EQ(bw.transfer_ps(bw.bits_per_second()), kPsPerSecond);
  EXPECT_EQ(seconds_to_ps(0.064), 64'000'000'000ull);
  EXPECT_THROW(seconds_to_ps(0.0), ConfigError);
}
