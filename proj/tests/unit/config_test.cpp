#include "partloc/config.hpp"

#include <gtest/gtest.h>

#include "partloc/error.hpp"
#include "test_util.hpp"

namespace partloc {
namespace {

TEST(ConfigTest, DefaultsRoundTrip) {
  const ExperimentConfig c;
  const std::string text = dump_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.prior.neighbors, 20);
  EXPECT_DOUBLE_EQ(back.prior.alpha, 0.1);
  EXPECT_DOUBLE_EQ(back.prior.epsilon, 10.0);
  EXPECT_EQ(back.prior.mixture_components, 4);
  EXPECT_DOUBLE_EQ(back.detect.rule.pos_iou, 0.7);
  EXPECT_DOUBLE_EQ(back.detect.rule.neg_iou, 0.3);
}

TEST(ConfigTest, OverridesAndRoundTrip) {
  const ExperimentConfig c = parse_config(R"({
    "seed": 17,
    "priors": {"variant": "mg", "alpha": 0.25, "components": 3},
    "eval": {"folds": 3, "k_grid": [2, 4]},
    "synth": {"n_train": 20, "noise_sigma": 7.5}
  })");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(prior_variant_name(c.prior), "mg");
  EXPECT_DOUBLE_EQ(c.prior.alpha, 0.25);
  EXPECT_EQ(c.prior.mixture_components, 3);
  EXPECT_EQ(c.eval.k_grid, (std::vector<int>{2, 4}));
  EXPECT_EQ(c.synth.n_train, 20);
  EXPECT_DOUBLE_EQ(c.synth.noise_sigma, 7.5);
  testing::TempDir dir;
  save_config(dir / "c.json", c);
  EXPECT_EQ(dump_config(load_config(dir / "c.json")), dump_config(c));
}

TEST(ConfigTest, UnknownKeysAndBadValuesAreErrors) {
  EXPECT_THROW(parse_config(R"({"sed": 1})"), InvalidArgument);
  EXPECT_THROW(parse_config(R"({"priors": {"alpah": 0.1}})"), InvalidArgument);
  EXPECT_THROW(parse_config(R"({"priors": {"alpha": -1}})"), InvalidArgument);
  EXPECT_THROW(parse_config(R"({"eval": {"folds": 1}})"), InvalidArgument);
  EXPECT_THROW(parse_config("{not json"), InvalidArgument);
}

TEST(ConfigTest, ResolveSeeds) {
  ExperimentConfig c;
  c.seed = 99;
  c.resolve_seeds();
  EXPECT_EQ(c.detect.svm.seed, 99u);
  EXPECT_EQ(c.prior.seed, 99u);
}

TEST(PartsFileTest, RoundTripAndResolution) {
  testing::TempDir dir;
  PartsFile pf{{0.0, 4.0}, default_cub_parts()};
  pf.parts.pop_back();
  write_parts_file(dir / "parts.json", pf);
  const PartsFile back = read_parts_file(dir / "parts.json");
  ASSERT_EQ(back.parts.size(), 2u);
  EXPECT_EQ(back.parts[1].keypoints, pf.parts[1].keypoints);
  EXPECT_EQ(back.boxes.min_side, 4.0);

  const ExperimentConfig c;
  // The sidecar next to the manifest wins over the built-in default.
  EXPECT_EQ(resolve_parts(c, dir / "manifest.jsonl").parts.size(), 2u);
  EXPECT_EQ(resolve_parts(c, dir / "sub" / "manifest.jsonl").parts.size(), 3u);
}

}  // namespace
}  // namespace partloc
