// Contract test against the checked-in fixture stores. The fixtures are
// written by tests/fixtures/make_fixture_store.py, which does not share code
// with the library, so this pins the on-disk format from both sides.
#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "partloc/featstore.hpp"
#include "test_util.hpp"

namespace partloc {
namespace {

const std::filesystem::path kDir = PARTLOC_FIXTURE_DIR;

nlohmann::json manifest() {
  std::ifstream in(kDir / "adapter_fixture.json");
  return nlohmann::json::parse(in);
}

class FixtureStoreTest : public ::testing::TestWithParam<std::string> {};

TEST_P(FixtureStoreTest, MatchesManifest) {
  const auto entry = manifest().at(GetParam());
  const FeatureStore store = FeatureStore::load(kDir / entry.at("file").get<std::string>());
  EXPECT_EQ(store.channel().name, GetParam());
  EXPECT_EQ(store.channel().dim, entry.at("dim").get<std::uint32_t>());
  EXPECT_EQ(store.size(), entry.at("count").get<std::size_t>());
  EXPECT_EQ(std::to_string(store.checksum()), entry.at("checksum").get<std::string>());
  for (const auto& s : entry.at("samples")) {
    const FeatureKey key{s.at("image_id").get<std::uint64_t>(), s.at("region_id").get<std::uint32_t>()};
    const auto expected = s.at("values").get<std::vector<float>>();
    EXPECT_EQ(store.get(key), expected);
  }
}

TEST_P(FixtureStoreTest, ResaveIsCanonicalAndStable) {
  const auto entry = manifest().at(GetParam());
  const FeatureStore store = FeatureStore::load(kDir / entry.at("file").get<std::string>());
  testing::TempDir dir;
  store.save(dir / "a.pgfs");
  const FeatureStore again = FeatureStore::load(dir / "a.pgfs");
  again.save(dir / "b.pgfs");
  EXPECT_EQ(testing::read_bytes(dir / "a.pgfs"), testing::read_bytes(dir / "b.pgfs"));
  EXPECT_EQ(again.checksum(), store.checksum());
  EXPECT_EQ(again.records(), store.records());
}

INSTANTIATE_TEST_SUITE_P(Channels, FixtureStoreTest, ::testing::Values("detector", "appearance"));

}  // namespace
}  // namespace partloc
