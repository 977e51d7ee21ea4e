#include <gtest/gtest.h>

#include <random>

#include "tinyann/error.hpp"
#include "tinyann/pipeline.hpp"

using namespace tinyann;

namespace {

std::vector<Image> dip_stream(std::size_t before, std::size_t dip, std::size_t after, std::uint16_t level = 800,
                              double depth = 0.2) {
  std::vector<Image> s;
  for (std::size_t i = 0; i < before; ++i) s.push_back(Image::filled(3, 3, level));
  const auto dark = static_cast<std::uint16_t>(level * (1.0 - depth));
  for (std::size_t i = 0; i < dip; ++i) s.push_back(Image::filled(3, 3, dark));
  for (std::size_t i = 0; i < after; ++i) s.push_back(Image::filled(3, 3, level));
  return s;
}

// A reference detector written directly from the rule set, with no trailing
// merge: used on streams where runs are far apart. Deviating frames that
// fail the stability test extend a run without counting towards it.
std::vector<std::pair<std::size_t, std::size_t>> reference_runs(const std::vector<Image>& stream) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  double rolling = stream[0].mean();
  double prev = rolling;
  bool in_run = false;
  std::size_t count = 0, first = 0, last = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const double m = stream[i].mean();
    const bool considered = i == 0 || std::abs(m - prev) < 0.01 * prev;
    prev = m;
    if (std::abs(m - rolling) >= 0.1 * rolling) {
      if (!in_run) first = i, count = 0, in_run = true;
      last = i;
      count += considered;
    } else if (considered) {
      if (in_run && count >= 9) out.emplace_back(first - 5, last + 5);
      in_run = false;
      rolling = 0.95 * rolling + 0.05 * m;
    }
  }
  return out;
}

}  // namespace

TEST(Detector, ConstantStreamHasNoCandidates) {
  EXPECT_TRUE(extract_candidates(dip_stream(200, 0, 0)).empty());
}

TEST(Detector, TwelveFrameDipGivesTwentyTwoFrames) {
  const auto stream = dip_stream(20, 12, 20);
  const auto c = extract_candidates(stream);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].size(), 22u);
  EXPECT_EQ(c[0].start_index, 15u);
  EXPECT_EQ(c[0].end_index, 36u);
  EXPECT_FALSE(c[0].truncated);
  for (std::size_t i = 0; i < c[0].size(); ++i) EXPECT_EQ(c[0].images[i], stream[15 + i]);
}

TEST(Detector, FiveFrameDipIsIgnored) {
  EXPECT_TRUE(extract_candidates(dip_stream(20, 5, 20)).empty());
}

TEST(Detector, NineConsideredFramesAreNeeded) {
  // The step into a dip fails the stability test, so it extends the run
  // without counting: ten dark frames count nine.
  EXPECT_EQ(extract_candidates(dip_stream(20, 10, 20)).size(), 1u);
  EXPECT_EQ(extract_candidates(dip_stream(20, 9, 20)).size(), 0u);
}

TEST(Detector, SlowDriftIsBackground) {
  // 0.2% steps pass the stability test and keep the rolling average close.
  std::vector<Image> s(20, Image::filled(3, 3, 800));
  double level = 800;
  for (int i = 0; i < 300; ++i) s.push_back(Image::filled(3, 3, static_cast<std::uint16_t>(level *= 0.998)));
  for (int i = 0; i < 300; ++i) s.push_back(Image::filled(3, 3, static_cast<std::uint16_t>(level /= 0.998)));
  EXPECT_TRUE(extract_candidates(s).empty());
  // a dip on top of the drifted background is still found
  const auto base = static_cast<std::uint16_t>(level);
  s.insert(s.end(), 12, Image::filled(3, 3, static_cast<std::uint16_t>(base * 0.8)));
  s.insert(s.end(), 20, Image::filled(3, 3, base));
  EXPECT_EQ(extract_candidates(s).size(), 1u);
}

TEST(Detector, NineteenFrameMinimumLength) {
  const auto c = extract_candidates(dip_stream(20, 10, 20));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].size(), 20u);
}

TEST(Detector, OverflowIsTruncatedNotDropped) {
  const auto c = extract_candidates(dip_stream(20, 200, 20));
  ASSERT_FALSE(c.empty());
  EXPECT_TRUE(c[0].truncated);
  EXPECT_EQ(c[0].size(), 80u);
}

TEST(Detector, CandidatesDoNotMoveTheRollingAverage) {
  CandidateExtractor ex;
  for (const auto& img : dip_stream(20, 12, 0)) ex.push(img);
  ASSERT_TRUE(ex.rolling_average().has_value());
  EXPECT_DOUBLE_EQ(*ex.rolling_average(), 800.0);
}

TEST(Detector, MatchesReferenceOnSeparatedDips) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(4, 30);
  std::vector<Image> stream = dip_stream(30, 0, 0);
  for (int k = 0; k < 30; ++k) {
    const auto more = dip_stream(0, len(rng), 40);
    stream.insert(stream.end(), more.begin(), more.end());
  }
  const auto got = extract_candidates(stream);
  const auto want = reference_runs(stream);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].start_index, want[i].first);
    EXPECT_EQ(got[i].end_index, want[i].second);
    if (i > 0) {
      EXPECT_GT(got[i].start_index, got[i - 1].end_index);
    }
  }
}

TEST(Detector, FlushEmitsPendingRun) {
  const auto c = extract_candidates(dip_stream(20, 12, 2));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].end_index, 33u);
}

TEST(Scaling, InterpolationExample) {
  std::vector<double> s{0, 0, 0, 100, 200};
  EXPECT_DOUBLE_EQ(interpolate_at(s, 3.26), 126.0);
  EXPECT_EQ(interpolate_at(s, 4.0), 200.0);
}

namespace {

Candidate ramp_candidate(std::size_t n) {
  Candidate c;
  for (std::size_t i = 0; i < n; ++i) c.images.push_back(Image::filled(3, 3, static_cast<std::uint16_t>(i * 10 + 1)));
  c.end_index = n - 1;
  return c;
}

}  // namespace

TEST(Scaling, TwentyFramesUnchangedAndIdempotent) {
  const auto c = ramp_candidate(20);
  const auto s = scale_candidate(c);
  ASSERT_EQ(s.values.size(), 180u);
  for (std::size_t f = 0; f < 20; ++f) {
    for (double v : s.frame(f)) EXPECT_EQ(v, static_cast<double>(f * 10 + 1));
  }
}

TEST(Scaling, ThirtyNineFramesAtStrideTwo) {
  const auto s = scale_candidate(ramp_candidate(39));
  for (std::size_t f = 0; f < 20; ++f) EXPECT_DOUBLE_EQ(s.frame(f)[0], static_cast<double>(2 * f * 10 + 1));
}

TEST(Scaling, EndpointsPreservedAndConvex) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> px(0, 1023);
  Candidate c;
  for (int i = 0; i < 27; ++i) {
    Image img = Image::filled(3, 3, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(px(rng));
    c.images.push_back(img);
  }
  const auto s = scale_candidate(c);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(s.frame(0)[i], c.images.front().pixels[i]);
    EXPECT_EQ(s.frame(19)[i], c.images.back().pixels[i]);
  }
  for (std::size_t f = 0; f < 20; ++f) {
    const double t = static_cast<double>(f) * 26.0 / 19.0;
    const auto lo = static_cast<std::size_t>(t);
    const auto hi = std::min<std::size_t>(lo + 1, 26);
    for (std::size_t i = 0; i < 9; ++i) {
      const double a = c.images[lo].pixels[i], b = c.images[hi].pixels[i];
      EXPECT_GE(s.frame(f)[i], std::min(a, b) - 1e-9);
      EXPECT_LE(s.frame(f)[i], std::max(a, b) + 1e-9);
    }
  }
}

TEST(Scaling, TooShort) {
  try {
    scale_candidate(ramp_candidate(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
  }
}

TEST(Classify, TieGoesToLowestClassAndShapesAreChecked) {
  const auto spec = parse_architecture("180-5softmax");
  const auto params = Parameters::zeros(spec);
  const auto s = scale_candidate(ramp_candidate(20));
  EXPECT_EQ(classify_candidate(spec, params, s), GestureClass::LeftToRight);
  const auto wrong = parse_architecture("90-5softmax");
  try {
    classify_candidate(wrong, Parameters::zeros(wrong), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Classify, UsesTimeMajorNormalizedFeatures) {
  const auto s = scale_candidate(ramp_candidate(20));
  const auto f = candidate_features(s);
  ASSERT_EQ(f.size(), 180u);
  EXPECT_EQ(f[9], 11.0 / 1024.0);
  EXPECT_EQ(f[179], 191.0 / 1024.0);
  // A model whose class 3 sums the last frame picks class 3.
  const auto spec = parse_architecture("180-5relu");
  auto params = Parameters::zeros(spec);
  for (std::size_t c = 171; c < 180; ++c) params.layers[0].weights(3, c) = 1.0;
  MacCounter counter;
  EXPECT_EQ(classify_candidate(spec, params, s, {ExpMode::Exact, &counter}), GestureClass::BottomToTop);
  EXPECT_EQ(counter.count(), 900u);
}

TEST(Fsm, EmitsOnLastStateThenInitial) {
  PhaseFsm fsm;
  std::vector<std::optional<GestureEvent>> out;
  for (std::size_t s : {0, 1, 2, 3, 4, 0}) out.push_back(fsm.push_state(s));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_FALSE(out[i].has_value());
  ASSERT_TRUE(out[5].has_value());
  EXPECT_EQ(out[5]->frame, 5u);
  EXPECT_EQ(out[5]->gesture, GestureClass::LeftToRight);
}

TEST(Fsm, NoEmissionOnIdleOrAbort) {
  PhaseFsm fsm;
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(fsm.push_state(0).has_value());
  fsm.reset();
  for (std::size_t s : {0, 1, 2, 0}) EXPECT_FALSE(fsm.push_state(s).has_value());
}

TEST(Fsm, PostprocessUsesArgmax) {
  std::vector<OutputVector> outputs;
  for (std::size_t s : {0, 13, 14, 15, 16, 0, 0}) {
    OutputVector v(17, 0.0);
    v[s] = 1.0;
    outputs.push_back(v);
  }
  const auto ev = fsm_postprocess(outputs);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0], (GestureEvent{5, GestureClass::BottomToTop}));
  EXPECT_EQ(phase::last_state(GestureClass::TopToBottom), 12);
}

TEST(Accuracy, ToleranceBoundary) {
  const std::vector<Annotation> truth{{100, GestureClass::TopToBottom}};
  const std::vector<GestureEvent> at10{{110, GestureClass::TopToBottom}};
  const std::vector<GestureEvent> at11{{111, GestureClass::TopToBottom}};
  const std::vector<GestureEvent> before10{{90, GestureClass::TopToBottom}};
  EXPECT_EQ(evaluate_accuracy(at10, truth).correct, 1u);
  EXPECT_EQ(evaluate_accuracy(at11, truth).correct, 0u);
  EXPECT_EQ(evaluate_accuracy(before10, truth).correct, 1u);
}

TEST(Accuracy, SpuriousEmissionMakesItWrong) {
  const std::vector<Annotation> truth{{100, GestureClass::LeftToRight}};
  const std::vector<GestureEvent> ev{{103, GestureClass::LeftToRight}, {105, GestureClass::RightToLeft}};
  const auto r = evaluate_accuracy(ev, truth);
  EXPECT_EQ(r.correct, 0u);
  EXPECT_EQ(r.total, 1u);
  EXPECT_EQ(r.confusion[0][0], 1u);
}

TEST(Accuracy, NoGestureHandling) {
  const std::vector<Annotation> truth{{100, GestureClass::NoGesture}, {300, GestureClass::NoGesture}};
  const std::vector<GestureEvent> ev{{100, GestureClass::NoGesture}, {305, GestureClass::RightToLeft}};
  const auto r = evaluate_accuracy(ev, truth);
  EXPECT_EQ(r.correct, 1u);
  EXPECT_EQ(r.total, 2u);
  EXPECT_DOUBLE_EQ(r.accuracy(), 0.5);
  EXPECT_EQ(r.confusion[4][4], 1u);
  EXPECT_EQ(r.confusion[4][1], 1u);
}

TEST(Labels, NearestAnnotationInsideCandidate) {
  const auto stream = dip_stream(20, 12, 40);
  const std::vector<Annotation> ann{{33, GestureClass::RightToLeft}, {80, GestureClass::TopToBottom}};
  const auto labeled = label_candidates(stream, ann);
  ASSERT_EQ(labeled.size(), 1u);
  EXPECT_EQ(labeled[0].label, GestureClass::RightToLeft);
  const auto none = label_candidates(stream, std::vector<Annotation>{{80, GestureClass::TopToBottom}});
  EXPECT_EQ(none[0].label, GestureClass::NoGesture);
}

TEST(Names, GestureNamesRoundTrip) {
  for (std::size_t i = 0; i < kGestureClasses; ++i) {
    const auto g = static_cast<GestureClass>(i);
    EXPECT_EQ(gesture_from_string(to_string(g)), g);
  }
}
