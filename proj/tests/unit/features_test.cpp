#include <gtest/gtest.h>

#include <random>

#include "tinyann/error.hpp"
#include "tinyann/features.hpp"

using namespace tinyann;

TEST(Normalize, HandValues) {
  Image img = Image::filled(3, 3, 0);
  img.at(1, 0) = 1023;
  img.at(2, 0) = 512;
  const auto n = normalize(img);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_EQ(n[1], 0.9990234375);
  EXPECT_EQ(n[2], 0.5);
}

TEST(Normalize, RejectsBadImages) {
  Image img = Image::filled(3, 3, 0);
  img.pixels[4] = 1024;
  try {
    normalize(img);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PixelOutOfRange);
  }
  Image short_img(3, 3, std::vector<std::uint16_t>(8, 0));
  EXPECT_THROW(normalize(short_img), Error);
}

TEST(Rolling, ConstantInputIsFixedPoint) {
  RollingStats stats;
  const Image img = Image::filled(3, 3, 300);
  for (int i = 0; i < 50; ++i) stats = update_rolling(stats, img);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_DOUBLE_EQ(stats.avg[i], 300.0 / 1024.0);
    EXPECT_DOUBLE_EQ(stats.min[i], 300.0 / 1024.0);
    EXPECT_DOUBLE_EQ(stats.max[i], 300.0 / 1024.0);
  }
}

TEST(Rolling, AverageStep) {
  RollingStats stats;
  update_rolling_in_place(stats, std::vector<double>{0.5});
  update_rolling_in_place(stats, std::vector<double>{1.0});
  EXPECT_NEAR(stats.avg[0], 0.505, 1e-15);
}

TEST(Rolling, HandTracedFiveSteps) {
  // min/max recurrences traced by hand with alpha 0.5
  RollingStats stats;
  stats.alpha = 0.5;
  const std::vector<double> s{0.4, 0.6, 0.1, 0.4, 0.8};
  double avg = 0.4, mn = 0.4, mx = 0.4;
  for (std::size_t i = 0; i < s.size(); ++i) {
    update_rolling_in_place(stats, std::vector<double>{s[i]});
    if (i > 0) {
      const double prev_avg = avg;
      avg = 0.5 * avg + 0.5 * s[i];
      mn = std::min(s[i], 0.5 * mn + 0.5 * prev_avg);
      mx = std::max(s[i], 0.5 * mx + 0.5 * prev_avg);
    }
    EXPECT_DOUBLE_EQ(stats.avg[0], avg);
    EXPECT_DOUBLE_EQ(stats.min[0], mn);
    EXPECT_DOUBLE_EQ(stats.max[0], mx);
  }
  // the 0.1 spike at step 2 sits below the decayed min track
  stats = RollingStats{};
  stats.alpha = 0.5;
  for (double v : {0.4, 0.6, 0.1}) update_rolling_in_place(stats, std::vector<double>{v});
  EXPECT_EQ(stats.min[0], 0.1);
}

TEST(Rolling, MinNeverExceedsMaxAndReplayIsExact) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> px(0, 1023);
  std::vector<Image> stream;
  for (int i = 0; i < 500; ++i) {
    Image img = Image::filled(3, 3, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(px(rng));
    stream.push_back(img);
  }
  RollingStats a, b;
  for (const auto& img : stream) {
    a = update_rolling(a, img);
    for (std::size_t i = 0; i < 9; ++i) ASSERT_LE(a.min[i], a.max[i]);
  }
  for (const auto& img : stream) b = update_rolling(b, img);
  EXPECT_EQ(a.avg, b.avg);
  EXPECT_EQ(a.min, b.min);
  EXPECT_EQ(a.max, b.max);
}

TEST(BuildFeatures, CountsAndRange) {
  const Image img = Image::filled(3, 3, 700);
  EXPECT_EQ(build_features(img, nullptr).size(), 9u);
  RollingStats stats = update_rolling({}, img);
  const auto f = build_features(img, &stats);
  ASSERT_EQ(f.size(), 12u);
  for (double v : f) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  const Image dark = Image::filled(3, 3, 0);
  RollingStats zero = update_rolling({}, dark);
  for (double v : build_features(dark, &zero)) EXPECT_EQ(v, 0.0);
}

TEST(BuildFeatures, FeaturizerMatchesManualPipeline) {
  FrameFeaturizer featurizer(true, 0.9);
  RollingStats stats;
  stats.alpha = 0.9;
  for (std::uint16_t v : {100, 400, 250, 900}) {
    const Image img = Image::filled(3, 3, v);
    stats = update_rolling(stats, img);
    EXPECT_EQ(featurizer.push(img), build_features(img, &stats));
  }
  featurizer.reset();
  const Image img = Image::filled(3, 3, 10);
  const RollingStats fresh = update_rolling(RollingStats{0.9}, img);
  EXPECT_EQ(featurizer.push(img), build_features(img, &fresh));
  EXPECT_EQ(FrameFeaturizer::feature_count(16, true), 19u);
}
