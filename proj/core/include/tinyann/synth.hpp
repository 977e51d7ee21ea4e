#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tinyann/features.hpp"
#include "tinyann/pipeline.hpp"

namespace tinyann {

/// A recording with gesture annotations on the frame at which each movement
/// ends, plus optional per-frame phase-state labels (0..16).
struct AnnotatedSequence {
  std::size_t width = 3;
  std::size_t height = 3;
  std::vector<Image> images;
  std::vector<Annotation> annotations;
  std::vector<std::uint8_t> phases;

  std::size_t size() const noexcept { return images.size(); }
  bool operator==(const AnnotatedSequence&) const = default;
};

/// Appends `tail`, shifting its annotation frames. Phase labels are kept only
/// if both sides carry them.
void append(AnnotatedSequence& head, const AnnotatedSequence& tail);

/// Movements synthesized for the NoGesture class.
enum class NonGestureMotion {
  /// The whole field dims and recovers, as when a hand approaches head-on.
  Approach,
  /// The occluder enters from one side, stops part way and leaves the way it came.
  Bounce,
};

struct GestureSynthParams {
  GestureClass direction = GestureClass::LeftToRight;
  /// Frames the occluder's leading edge needs to cross the field once.
  double speed = 16.0;
  /// Occluder extent along the motion axis, in field widths.
  double occluder_width = 2.0;
  double background = 800.0;
  /// Fractional dimming of a fully covered pixel.
  double contrast = 0.6;
  double noise_sigma = 1.0;
  double gamma = 1.0;
  /// Width of the occluder's soft edge, in field widths.
  double edge_softness = 0.1;
  std::size_t width = 3;
  std::size_t height = 3;
  /// Steady frames before and after the movement.
  std::size_t lead_in = 20;
  std::size_t lead_out = 20;

  NonGestureMotion non_gesture_motion = NonGestureMotion::Approach;
  /// Side (as the gesture that would start there) a Bounce enters from.
  GestureClass bounce_from = GestureClass::LeftToRight;
  /// How far into the field a Bounce reaches, in field widths.
  double bounce_depth = 0.6;
  /// Frames a Bounce or Approach holds still at its extreme.
  std::size_t hold = 12;
};

/// Simulates a soft-edged occluder band sweeping over the sensor grid:
///   pixel = background * (1 - contrast * coverage) + noise, then gamma.
/// The frame at which the occluder has fully passed carries the annotation.
/// Deterministic for a given seed. Throws InvalidParams.
AnnotatedSequence synthesize_gesture(const GestureSynthParams& params, std::uint64_t seed);

enum class TransformKind {
  MirrorX,
  MirrorY,
  Rotate90,
  Rotate180,
  Rotate270,
  Brightness,
  Gamma,
  Noise,
};

struct Transform {
  TransformKind kind = TransformKind::MirrorX;
  /// Brightness offset in ADC counts, gamma exponent, or noise sigma.
  double amount = 0.0;
  std::uint64_t seed = 0;

  static Transform geometric(TransformKind k) { return {k, 0.0, 0}; }
  static Transform brightness(double delta) { return {TransformKind::Brightness, delta, 0}; }
  static Transform gamma(double g) { return {TransformKind::Gamma, g, 0}; }
  static Transform noise(double sigma, std::uint64_t seed) { return {TransformKind::Noise, sigma, seed}; }
};

constexpr bool is_geometric(TransformKind k) noexcept {
  return k == TransformKind::MirrorX || k == TransformKind::MirrorY ||
         k == TransformKind::Rotate90 || k == TransformKind::Rotate180 ||
         k == TransformKind::Rotate270;
}

/// Gesture relabeling under a geometric transform (identity otherwise).
/// Rotations are clockwise.
GestureClass remap(GestureClass g, TransformKind kind) noexcept;
std::uint8_t remap_phase(std::uint8_t state, TransformKind kind) noexcept;

/// Transforms pixels and relabels annotations. Rotations throw
/// NonSquareImage on non-square frames. Results are clamped to [0, 1023].
AnnotatedSequence augment(const AnnotatedSequence& seq, const Transform& transform);

/// Labels the candidates of a stream recorded under a fixed alternation of
/// two gestures; each annotation sits on the candidate's end frame.
AnnotatedSequence auto_annotate(std::span<const Image> stream,
                                std::pair<GestureClass, GestureClass> protocol,
                                const DetectorConfig& config = {});

struct CorpusConfig {
  std::size_t per_class = 540;
  std::uint64_t seed = 0;
  std::size_t width = 3;
  std::size_t height = 3;
  /// Instances recorded under the same background and photometric settings.
  std::size_t session_size = 20;
  /// Steady frames around each instance.
  std::size_t gap = 15;

  double speed_min = 12.0, speed_max = 20.0;
  double occluder_min = 1.7, occluder_max = 2.4;
  double background_min = 500.0, background_max = 950.0;
  double contrast_min = 0.35, contrast_max = 0.7;
  double noise_max = 1.2;
  /// Per-session photometric augmentation ranges.
  double brightness_max = 60.0;
  double gamma_min = 0.85, gamma_max = 1.15;
};

/// A single recording with `per_class` instances of each of the five classes.
/// Gesture instances are synthesized left-to-right and rotated or mirrored
/// into their class; each session then gets a random brightness and gamma
/// augmentation. Sessions are joined by slow background ramps.
AnnotatedSequence synthesize_corpus(const CorpusConfig& config);

/// Uniformly random frames, already at the classifier's fixed length.
std::vector<ScaledCandidate> clutter_candidates(std::size_t count, std::size_t width,
                                                std::size_t height, std::uint64_t seed,
                                                std::size_t frames = kScaledFrames);

/// Mixes a seed with a stream id into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace tinyann
