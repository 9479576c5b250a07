#include "partloc/featstore.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "partloc/error.hpp"
#include "test_util.hpp"

namespace partloc {
namespace {

using testing::TempDir;

TEST(CosineTest, Examples) {
  const std::vector<float> a{1.0f, 2.0f, -3.0f};
  EXPECT_NEAR(cosine_distance(a, a), 0.0, 1e-12);
  const std::vector<float> e1{1, 0, 0}, e2{0, 1, 0};
  EXPECT_NEAR(cosine_distance(e1, e2), 1.0, 1e-12);
  const std::vector<float> neg{-1.0f, -2.0f, 3.0f};
  EXPECT_NEAR(cosine_distance(a, neg), 2.0, 1e-12);
}

TEST(CosineTest, ErrorsOnZeroOrMismatch) {
  const std::vector<float> z{0, 0, 0}, a{1, 0, 0}, b{1, 0};
  EXPECT_THROW(cosine_distance(z, a), Error);
  EXPECT_THROW(cosine_distance(a, z), Error);
  EXPECT_THROW(cosine_distance(a, b), Error);
}

TEST(CosineTest, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::uniform_real_distribution<float> scale(0.01f, 100.0f);
  for (int t = 0; t < 1000; ++t) {
    std::vector<float> a(32), b(32), ca(32);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const float c = scale(rng);
    for (std::size_t i = 0; i < a.size(); ++i) ca[i] = c * a[i];
    const double d = cosine_distance(a, b);
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 2.0);
    ASSERT_NEAR(cosine_distance(ca, b), d, 1e-6);
  }
}

Raster textured(int w, int h, std::uint64_t seed) {
  Raster r{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h))};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(px(rng));
  return r;
}

TEST(ToyExtractTest, ConstantImageGivesFlaggedZeroVector) {
  const Raster r{64, 64, std::vector<std::uint8_t>(64 * 64, 77)};
  const ToyFeature f = toy_extract(r, BBox(10, 10, 40, 40), toy_options_for(kDetectorChannel));
  EXPECT_TRUE(f.degenerate);
  ASSERT_EQ(f.values.size(), 256u);
  for (float v : f.values) EXPECT_EQ(v, 0.0f);
}

TEST(ToyExtractTest, ChannelDimensionsAndNormalization) {
  const Raster r = textured(80, 60, 1);
  const ToyFeature det = toy_extract(r, BBox(5, 5, 50, 40), toy_options_for(kDetectorChannel));
  const ToyFeature app = toy_extract(r, BBox(5, 5, 50, 40), toy_options_for(kAppearanceChannel));
  ASSERT_EQ(det.values.size(), 256u);
  ASSERT_EQ(app.values.size(), 64u);
  EXPECT_FALSE(det.degenerate);
  double sum = 0.0, sq = 0.0;
  for (float v : det.values) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  EXPECT_NEAR(sum, 0.0, 1e-4);
  EXPECT_NEAR(sq, 1.0, 1e-5);
}

TEST(ToyExtractTest, DeterministicBitIdentical) {
  const Raster r = textured(100, 100, 2);
  const auto opts = toy_options_for(kDetectorChannel);
  const ToyFeature a = toy_extract(r, BBox(3.5, 7.25, 71, 90), opts);
  const ToyFeature b = toy_extract(r, BBox(3.5, 7.25, 71, 90), opts);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)), 0);
}

TEST(ToyExtractTest, TranslatedContentAndRegionGiveSameVector) {
  const Raster base = textured(120, 120, 3);
  const int dx = 13, dy = 7;
  Raster shifted{120, 120, std::vector<std::uint8_t>(120 * 120, 0)};
  for (int y = 0; y < 120; ++y) {
    for (int x = 0; x < 120; ++x) {
      const int sx = x - dx, sy = y - dy;
      if (sx >= 0 && sy >= 0) {
        shifted.pixels[static_cast<std::size_t>(y * 120 + x)] = base.at(sx, sy);
      }
    }
  }
  // Region plus context stays inside the copied content in both images.
  const BBox region(30, 30, 70, 60);
  const BBox moved(30 + dx, 30 + dy, 70 + dx, 60 + dy);
  for (const char* ch : {kDetectorChannel, kAppearanceChannel}) {
    const auto opts = toy_options_for(ch);
    const ToyFeature a = toy_extract(base, region, opts);
    const ToyFeature b = toy_extract(shifted, moved, opts);
    EXPECT_EQ(a.values, b.values) << ch;
  }
}

TEST(ToyExtractTest, RegionOutsideImageThrows) {
  const Raster r = textured(50, 50, 4);
  EXPECT_THROW(toy_extract(r, BBox(60, 60, 80, 80), toy_options_for(kDetectorChannel)), Error);
}

TEST(ToyExtractTest, EdgeRegionUsesMirrorPadding) {
  const Raster r = textured(50, 50, 5);
  const ToyFeature f = toy_extract(r, BBox(0, 0, 50, 50), toy_options_for(kAppearanceChannel));
  EXPECT_FALSE(f.degenerate);
  for (float v : f.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(PgmTest, RoundTrip) {
  TempDir dir;
  const Raster r = textured(17, 9, 6);
  write_pgm(dir / "a.pgm", r);
  const Raster back = read_pgm(dir / "a.pgm");
  EXPECT_EQ(back.width, 17);
  EXPECT_EQ(back.height, 9);
  EXPECT_EQ(back.pixels, r.pixels);
  EXPECT_EQ(pgm_size(dir / "a.pgm"), std::make_pair(17, 9));
  testing::write_text(dir / "bad.pgm", "P2\n1 1\n255\n0\n");
  EXPECT_THROW(read_pgm(dir / "bad.pgm"), Error);
}

TEST(FeatureStoreTest, PutGetAndErrors) {
  FeatureStore store({kAppearanceChannel, 3});
  const std::vector<float> v{1.0f, -2.0f, 0.5f};
  store.put({4, 9}, v);
  EXPECT_EQ(store.get({4, 9}), v);
  EXPECT_THROW(store.get({4, 10}), LookupError);
  const std::vector<float> wrong{1.0f, 2.0f};
  EXPECT_THROW(store.put({1, 1}, wrong), Error);
  const std::vector<float> nan{1.0f, NAN, 0.0f};
  EXPECT_THROW(store.put({1, 1}, nan), Error);
  EXPECT_EQ(store.size(), 1u);
}

TEST(FeatureStoreTest, ReopenedStoreReturnsEqualVector) {
  TempDir dir;
  FeatureStore store({kDetectorChannel, 2});
  store.put({1, 2}, std::vector<float>{0.25f, -0.75f});
  store.save(dir / "s.pgfs");
  const FeatureStore back = FeatureStore::load(dir / "s.pgfs");
  EXPECT_EQ(back.channel(), store.channel());
  EXPECT_EQ(back.get({1, 2}), (std::vector<float>{0.25f, -0.75f}));
}

TEST(FeatureStoreTest, TenThousandRandomVectorsRoundTripByteExact) {
  TempDir dir;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::uint32_t> bits;
  FeatureStore store({kDetectorChannel, 16});
  for (std::uint32_t i = 0; i < 10000; ++i) {
    std::vector<float> v(16);
    for (auto& x : v) {
      // Random finite bit patterns, including subnormals and negative zero.
      do {
        const std::uint32_t b = bits(rng);
        std::memcpy(&x, &b, sizeof x);
      } while (!std::isfinite(x));
    }
    store.put({rng() % 997, i}, v);
  }
  store.save(dir / "big.pgfs");
  const FeatureStore back = FeatureStore::load(dir / "big.pgfs");
  ASSERT_EQ(back.size(), store.size());
  for (const auto& [key, v] : store.records()) {
    const auto& w = back.get(key);
    ASSERT_EQ(std::memcmp(v.data(), w.data(), v.size() * sizeof(float)), 0);
  }
  EXPECT_EQ(back.checksum(), store.checksum());
  back.save(dir / "again.pgfs");
  EXPECT_EQ(testing::read_bytes(dir / "big.pgfs"), testing::read_bytes(dir / "again.pgfs"));
}

TEST(FeatureStoreTest, HeaderLayoutIsLittleEndian) {
  TempDir dir;
  FeatureStore store({"detector", 2});
  store.put({0x0102030405060708ull, 0x0A0B0C0Du}, std::vector<float>{1.0f, 2.0f});
  store.save(dir / "h.pgfs");
  const std::string b = testing::read_bytes(dir / "h.pgfs");
  // magic 4 + version 4 + len 4 + "detector" 8 + dim 4 + count 8 = 32 header bytes,
  // then one record of 8 + 4 + 8 and one index entry of 8 + 4 + 8.
  ASSERT_EQ(b.size(), 32u + 20u + 20u);
  EXPECT_EQ(b.substr(0, 4), "PGFS");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 8u);
  EXPECT_EQ(b.substr(12, 8), "detector");
  EXPECT_EQ(static_cast<unsigned char>(b[20]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(b[24]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(b[32]), 0x08u);
  EXPECT_EQ(static_cast<unsigned char>(b[39]), 0x01u);
  EXPECT_EQ(static_cast<unsigned char>(b[40]), 0x0Du);
}

TEST(FeatureStoreTest, CorruptedFilesAreRejected) {
  TempDir dir;
  FeatureStore store({"detector", 2});
  store.put({1, 1}, std::vector<float>{1.0f, 2.0f});
  store.put({2, 1}, std::vector<float>{3.0f, 4.0f});
  store.save(dir / "ok.pgfs");
  const std::string good = testing::read_bytes(dir / "ok.pgfs");

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  testing::write_text(dir / "magic.pgfs", bad_magic);
  EXPECT_THROW(FeatureStore::load(dir / "magic.pgfs"), Error);

  testing::write_text(dir / "short.pgfs", good.substr(0, good.size() - 5));
  EXPECT_THROW(FeatureStore::load(dir / "short.pgfs"), Error);

  // Index entry pointing at the wrong record.
  std::string bad_index = good;
  bad_index[good.size() - 8] = 0;  // ordinal of the second entry: 1 -> 0
  testing::write_text(dir / "index.pgfs", bad_index);
  EXPECT_THROW(FeatureStore::load(dir / "index.pgfs"), Error);

  EXPECT_THROW(FeatureStore::load(dir / "missing.pgfs"), Error);
}

TEST(GroundTruthRegionTest, ReservedIds) {
  EXPECT_EQ(ground_truth_region(0), 0xFFFFFF00u);
  EXPECT_EQ(ground_truth_region(2), 0xFFFFFF02u);
}

}  // namespace
}  // namespace partloc
