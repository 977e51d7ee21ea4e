#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <map>

#include "tinyann/error.hpp"
#include "tinyann/synth.hpp"

using namespace tinyann;

namespace {

std::size_t argmin_frame(const AnnotatedSequence& seq, std::size_t x, std::size_t y) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (seq.images[i].at(x, y) < seq.images[best].at(x, y)) best = i;
  }
  return best;
}

GestureSynthParams clean(GestureClass g) {
  GestureSynthParams p;
  p.direction = g;
  p.contrast = 1.0;
  p.noise_sigma = 0.0;
  p.occluder_width = 0.5;
  return p;
}

}  // namespace

TEST(Synth, LeftColumnDarkensFirst) {
  const auto seq = synthesize_gesture(clean(GestureClass::LeftToRight), 1);
  EXPECT_LT(argmin_frame(seq, 0, 1), argmin_frame(seq, 2, 1));
  ASSERT_EQ(seq.annotations.size(), 1u);
  EXPECT_EQ(seq.annotations[0].label, GestureClass::LeftToRight);
}

TEST(Synth, EachDirectionMovesTheRightWay) {
  auto first = [](GestureClass g, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1) {
    const auto seq = synthesize_gesture(clean(g), 1);
    return argmin_frame(seq, x0, y0) < argmin_frame(seq, x1, y1);
  };
  EXPECT_TRUE(first(GestureClass::RightToLeft, 2, 1, 0, 1));
  EXPECT_TRUE(first(GestureClass::TopToBottom, 1, 0, 1, 2));
  EXPECT_TRUE(first(GestureClass::BottomToTop, 1, 2, 1, 0));
}

TEST(Synth, AnnotationWhenTrailingEdgePassesLastColumn) {
  // With full contrast a pixel reads 800 * (1 - coverage); coverage drops
  // below one half once the trailing edge passes the pixel center.
  const auto p = clean(GestureClass::LeftToRight);
  const auto seq = synthesize_gesture(p, 1);
  const std::size_t a = seq.annotations[0].frame;
  EXPECT_GE(seq.images[a].at(2, 1), 400);
  EXPECT_LT(seq.images[a - 1].at(2, 1), 400);
  ASSERT_GE(seq.size(), a + 1 + p.lead_out);
  for (std::size_t i = seq.size() - p.lead_out; i < seq.size(); ++i) EXPECT_EQ(seq.images[i], Image::filled(3, 3, 800));
}

TEST(Synth, ZeroContrastIsSteadyNoGesture) {
  auto p = clean(GestureClass::LeftToRight);
  p.contrast = 0.0;
  const auto seq = synthesize_gesture(p, 3);
  for (const auto& img : seq.images) EXPECT_EQ(img, seq.images[0]);
  ASSERT_EQ(seq.annotations.size(), 1u);
  EXPECT_EQ(seq.annotations[0].label, GestureClass::NoGesture);
}

TEST(Synth, SeedDeterminism) {
  GestureSynthParams p;
  p.noise_sigma = 5.0;
  EXPECT_EQ(synthesize_gesture(p, 42), synthesize_gesture(p, 42));
  EXPECT_NE(synthesize_gesture(p, 42), synthesize_gesture(p, 43));
}

TEST(Synth, InvalidParams) {
  GestureSynthParams p;
  p.speed = 0.0;
  EXPECT_THROW(synthesize_gesture(p, 1), Error);
  p = {};
  p.background = 2000;
  try {
    synthesize_gesture(p, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidParams);
  }
}

TEST(Augment, MirrorAndRotationLabels) {
  EXPECT_EQ(remap(GestureClass::LeftToRight, TransformKind::MirrorX), GestureClass::RightToLeft);
  EXPECT_EQ(remap(GestureClass::TopToBottom, TransformKind::MirrorX), GestureClass::TopToBottom);
  EXPECT_EQ(remap(GestureClass::TopToBottom, TransformKind::MirrorY), GestureClass::BottomToTop);
  EXPECT_EQ(remap(GestureClass::LeftToRight, TransformKind::Rotate90), GestureClass::TopToBottom);
  EXPECT_EQ(remap(GestureClass::LeftToRight, TransformKind::Rotate180), GestureClass::RightToLeft);
  EXPECT_EQ(remap(GestureClass::LeftToRight, TransformKind::Rotate270), GestureClass::BottomToTop);
  for (auto k : {TransformKind::MirrorX, TransformKind::MirrorY, TransformKind::Rotate90, TransformKind::Rotate180,
                 TransformKind::Rotate270}) {
    EXPECT_EQ(remap(GestureClass::NoGesture, k), GestureClass::NoGesture);
    EXPECT_EQ(remap_phase(0, k), 0);
  }
  EXPECT_EQ(remap_phase(phase::state(GestureClass::LeftToRight, 3), TransformKind::MirrorX),
            phase::state(GestureClass::RightToLeft, 3));
}

TEST(Augment, PixelsFollowTheLabels) {
  // The synthesized LeftToRight sequence rotated clockwise must look like a
  // synthesized TopToBottom one.
  const auto l2r = synthesize_gesture(clean(GestureClass::LeftToRight), 1);
  const auto rotated = augment(l2r, Transform::geometric(TransformKind::Rotate90));
  const auto t2b = synthesize_gesture(clean(GestureClass::TopToBottom), 1);
  EXPECT_EQ(rotated.annotations, t2b.annotations);
  EXPECT_EQ(rotated.images, t2b.images);
  const auto mirrored = augment(l2r, Transform::geometric(TransformKind::MirrorX));
  EXPECT_EQ(mirrored.images, synthesize_gesture(clean(GestureClass::RightToLeft), 1).images);
  EXPECT_EQ(mirrored.annotations[0].label, GestureClass::RightToLeft);
}

TEST(Augment, GroupProperties) {
  GestureSynthParams p;
  p.noise_sigma = 8.0;
  const auto seq = synthesize_gesture(p, 9);
  const auto r180 = Transform::geometric(TransformKind::Rotate180);
  EXPECT_EQ(augment(augment(seq, r180), r180), seq);
  const auto mx = Transform::geometric(TransformKind::MirrorX);
  EXPECT_EQ(augment(augment(seq, mx), mx), seq);
  auto r = seq;
  for (int i = 0; i < 4; ++i) r = augment(r, Transform::geometric(TransformKind::Rotate90));
  EXPECT_EQ(r, seq);
  EXPECT_EQ(augment(augment(seq, Transform::geometric(TransformKind::Rotate90)),
                    Transform::geometric(TransformKind::Rotate270)),
            seq);
  // The eight symmetries permute the four gesture classes.
  for (auto k : {TransformKind::MirrorX, TransformKind::MirrorY, TransformKind::Rotate90, TransformKind::Rotate180,
                 TransformKind::Rotate270}) {
    std::vector<GestureClass> seen;
    for (std::size_t g = 0; g < 4; ++g) seen.push_back(remap(static_cast<GestureClass>(g), k));
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, (std::vector<GestureClass>{GestureClass::LeftToRight, GestureClass::RightToLeft,
                                               GestureClass::TopToBottom, GestureClass::BottomToTop}));
  }
}

TEST(Augment, PhotometricClampAndLabels) {
  AnnotatedSequence seq;
  seq.images.push_back(Image::filled(3, 3, 1000));
  seq.annotations.push_back({0, GestureClass::LeftToRight});
  const auto b = augment(seq, Transform::brightness(100));
  EXPECT_EQ(b.images[0].pixels[0], 1023);
  EXPECT_EQ(b.annotations, seq.annotations);
  EXPECT_EQ(augment(seq, Transform::brightness(-2000)).images[0].pixels[0], 0);
  const auto g = augment(seq, Transform::gamma(1.0));
  EXPECT_EQ(g.images[0], seq.images[0]);
  const auto n = augment(seq, Transform::noise(30.0, 5));
  EXPECT_EQ(n.size(), seq.size());
  for (auto v : n.images[0].pixels) EXPECT_LE(v, 1023);
}

TEST(Augment, RotationNeedsSquareFrames) {
  AnnotatedSequence seq;
  seq.width = 4;
  seq.height = 3;
  seq.images.push_back(Image::filled(4, 3, 10));
  try {
    augment(seq, Transform::geometric(TransformKind::Rotate90));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonSquareImage);
  }
  EXPECT_NO_THROW(augment(seq, Transform::geometric(TransformKind::MirrorX)));
}

TEST(AutoAnnotate, Alternates) {
  std::vector<Image> stream;
  auto add = [&](std::size_t n, std::uint16_t v) {
    for (std::size_t i = 0; i < n; ++i) stream.push_back(Image::filled(3, 3, v));
  };
  add(20, 800);
  for (int k = 0; k < 4; ++k) {
    add(12, 600);
    add(30, 800);
  }
  const auto seq = auto_annotate(stream, {GestureClass::LeftToRight, GestureClass::RightToLeft});
  ASSERT_EQ(seq.annotations.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(seq.annotations[i].label, i % 2 ? GestureClass::RightToLeft : GestureClass::LeftToRight);
  }
  std::vector<Image> three(stream.begin(), stream.begin() + 20 + 3 * 42);
  const auto odd = auto_annotate(three, {GestureClass::LeftToRight, GestureClass::RightToLeft});
  ASSERT_EQ(odd.annotations.size(), 3u);
  EXPECT_EQ(odd.annotations[2].label, GestureClass::LeftToRight);
  std::vector<Image> flat(50, Image::filled(3, 3, 800));
  EXPECT_TRUE(auto_annotate(flat, {GestureClass::LeftToRight, GestureClass::RightToLeft}).annotations.empty());
}

TEST(Corpus, ClassCountsAndDeterminism) {
  CorpusConfig cfg;
  cfg.per_class = 30;
  cfg.seed = 4;
  const auto a = synthesize_corpus(cfg);
  std::map<GestureClass, std::size_t> counts;
  for (const auto& ann : a.annotations) ++counts[ann.label];
  for (std::size_t g = 0; g < kGestureClasses; ++g) EXPECT_EQ(counts[static_cast<GestureClass>(g)], 30u);
  EXPECT_TRUE(std::is_sorted(a.annotations.begin(), a.annotations.end(),
                             [](const Annotation& x, const Annotation& y) { return x.frame < y.frame; }));
  EXPECT_EQ(a, synthesize_corpus(cfg));
  cfg.per_class = 0;
  EXPECT_TRUE(synthesize_corpus(cfg).annotations.empty());
}

TEST(Corpus, PaperScaleIsFast) {
  CorpusConfig cfg;
  cfg.per_class = 540;
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = synthesize_corpus(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(c.annotations.size(), 2700u);
  EXPECT_LT(secs, 60.0);
}

TEST(Corpus, ClutterInRange) {
  const auto clutter = clutter_candidates(10, 3, 3, 1);
  ASSERT_EQ(clutter.size(), 10u);
  for (const auto& s : clutter) {
    EXPECT_EQ(s.frames(), 20u);
    for (double v : s.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1023.0);
    }
  }
}

TEST(Append, ShiftsAnnotations) {
  AnnotatedSequence a, b;
  a.images.assign(5, Image::filled(3, 3, 1));
  b.images.assign(3, Image::filled(3, 3, 2));
  b.annotations.push_back({1, GestureClass::TopToBottom});
  append(a, b);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(a.annotations[0].frame, 6u);
}
