#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "tinyann/features.hpp"
#include "tinyann/inference.hpp"
#include "tinyann/model.hpp"

namespace tinyann {

/// Output neuron order of every 5-class gesture classifier.
enum class GestureClass : std::uint8_t {
  LeftToRight = 0,
  RightToLeft = 1,
  TopToBottom = 2,
  BottomToTop = 3,
  NoGesture = 4,
};

inline constexpr std::size_t kGestureClasses = 5;
inline constexpr std::size_t kScaledFrames = 20;

std::string_view to_string(GestureClass g) noexcept;
std::optional<GestureClass> gesture_from_string(std::string_view name) noexcept;
constexpr std::size_t index_of(GestureClass g) noexcept { return static_cast<std::size_t>(g); }

/// Phase states of the recurrent FSM recognizer: 0 is the initial state and
/// states 4g+1 .. 4g+4 are phases two to five of gesture g.
namespace phase {
inline constexpr std::size_t kStates = 17;
inline constexpr std::uint8_t kInitial = 0;
constexpr std::uint8_t state(GestureClass g, std::size_t phase_index) noexcept {
  // phase_index 1..4 for phases two to five
  return static_cast<std::uint8_t>(4 * index_of(g) + phase_index);
}
constexpr std::uint8_t last_state(GestureClass g) noexcept { return state(g, 4); }
}  // namespace phase

/// A label attached to one frame of a recording.
struct Annotation {
  std::size_t frame = 0;
  GestureClass label = GestureClass::NoGesture;

  bool operator==(const Annotation&) const = default;
};

struct GestureEvent {
  std::size_t frame = 0;
  GestureClass gesture = GestureClass::NoGesture;

  bool operator==(const GestureEvent&) const = default;
};

struct Candidate {
  std::vector<Image> images;
  std::size_t start_index = 0;
  std::size_t end_index = 0;
  /// The run hit the buffer capacity and was cut short.
  bool truncated = false;

  std::size_t size() const noexcept { return images.size(); }
};

/// Candidate resampled to a fixed number of frames; values are ADC counts
/// stored frame after frame.
struct ScaledCandidate {
  std::size_t width = 3;
  std::size_t height = 3;
  std::vector<double> values;

  std::size_t frame_size() const noexcept { return width * height; }
  std::size_t frames() const noexcept { return frame_size() ? values.size() / frame_size() : 0; }
  std::span<const double> frame(std::size_t i) const {
    return std::span<const double>(values).subspan(i * frame_size(), frame_size());
  }
};

struct DetectorConfig {
  /// Relative deviation from the rolling brightness that marks a frame.
  double deviation = 0.10;
  /// Frames whose mean moved this much (relative) since the previous frame
  /// are not considered.
  double stability = 0.01;
  std::size_t min_run = 9;
  std::size_t margin = 5;
  std::size_t capacity = 80;
  /// Smoothing factor of the rolling brightness average.
  double alpha = 0.95;
};

/// Streaming detector of frame runs that deviate from the background
/// brightness.
///
/// A frame deviates when |mean - rolling| >= deviation * rolling. Frames are
/// only "considered" when their mean differs from the previous frame's by
/// less than `stability`; a frame that is not considered neither updates the
/// rolling average nor counts towards the run. The rolling average is
/// updated only by considered, non-deviating frames. A run ends at the first
/// considered non-deviating frame and is emitted, widened by `margin` frames
/// on either side, when it counted at least `min_run` considered deviating
/// frames. Runs that would exceed `capacity` buffered frames are emitted
/// truncated.
class CandidateExtractor {
 public:
  explicit CandidateExtractor(DetectorConfig config = {});

  std::optional<Candidate> push(const Image& image);
  /// Closes a pending run at the end of the stream.
  std::optional<Candidate> flush();
  void reset();

  std::size_t frames_seen() const noexcept { return next_frame_; }
  std::optional<double> rolling_average() const noexcept { return rolling_; }
  const DetectorConfig& config() const noexcept { return config_; }

 private:
  enum class State { Idle, InRun, Trailing, Overflowed };

  std::optional<Candidate> finish(std::size_t end_index, bool truncated);
  void update_rolling(double mean);

  DetectorConfig config_;
  State state_ = State::Idle;
  std::size_t next_frame_ = 0;
  std::optional<double> rolling_;
  std::optional<double> prev_mean_;
  std::deque<std::pair<std::size_t, Image>> history_;
  std::vector<Image> buffer_;
  std::size_t buffer_start_ = 0;
  std::size_t last_deviating_ = 0;
  std::size_t counted_ = 0;
  std::size_t free_from_ = 0;
};

std::vector<Candidate> extract_candidates(std::span<const Image> stream,
                                          const DetectorConfig& config = {});

/// Value at fractional time t of a sequence sampled at integer times:
///   S(t) = S(floor t) (floor t + 1 - t) + S(floor t + 1) (t - floor t)
double interpolate_at(std::span<const double> samples, double t);

/// Resamples the candidate at `target` equally spaced times from its first
/// to its last frame. Throws TooShort for fewer than two frames.
ScaledCandidate scale_candidate(const Candidate& candidate, std::size_t target = kScaledFrames);

/// Normalized (/1024) values, time-major: frame 0 pixels, frame 1 pixels, ...
std::vector<double> candidate_features(const ScaledCandidate& scaled);

/// Runs the FFNN and returns the class with the highest activation (lowest
/// index on ties). Throws ShapeMismatch unless the model has
/// frames * pixels features and five outputs.
GestureClass classify_candidate(const ModelSpec& spec, const Parameters& params,
                                const ScaledCandidate& scaled, const ExecOptions& opts = {});

/// Turns the per-frame argmax of a 17-state phase RNN into gesture events: a
/// gesture is emitted at frame t+1 when frame t sits in its last phase state
/// and frame t+1 is back in the initial state.
class PhaseFsm {
 public:
  std::optional<GestureEvent> push(std::span<const double> outputs);
  std::optional<GestureEvent> push_state(std::size_t state);
  void reset() noexcept;

 private:
  std::size_t frame_ = 0;
  std::optional<std::size_t> prev_state_;
};

std::vector<GestureEvent> fsm_postprocess(std::span<const OutputVector> outputs);

/// Candidate-based recognition over a recorded stream. Every emitted
/// candidate yields one event at its end_index, including NoGesture ones.
std::vector<GestureEvent> recognize_candidates(const ModelSpec& spec, const Parameters& params,
                                               std::span<const Image> stream,
                                               const DetectorConfig& config = {},
                                               const ExecOptions& opts = {});

/// Phase-RNN recognition; the model must have 17 outputs and 9 or 12
/// features (12 = with rolling statistics).
std::vector<GestureEvent> recognize_phases(const ModelSpec& spec, const Parameters& params,
                                           std::span<const Image> stream,
                                           const ExecOptions& opts = {});

/// Gesture-RNN recognition with five outputs: emits on every change of the
/// argmax to a gesture class.
std::vector<GestureEvent> recognize_rnn_gestures(const ModelSpec& spec, const Parameters& params,
                                                 std::span<const Image> stream,
                                                 const ExecOptions& opts = {});

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t total = 0;
  /// confusion[truth][predicted]; predicted is the gesture event nearest to
  /// the annotation inside the window, NoGesture when there is none.
  std::array<std::array<std::size_t, kGestureClasses>, kGestureClasses> confusion{};

  double accuracy() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

/// An annotated gesture counts as recognized when exactly one gesture event
/// falls within +-tolerance frames of the annotation and it has the right
/// class. A NoGesture annotation counts when no gesture event falls in its
/// window. NoGesture events are ignored.
AccuracyReport evaluate_accuracy(std::span<const GestureEvent> predictions,
                                 std::span<const Annotation> truth, std::size_t tolerance = 10);

struct LabeledCandidate {
  Candidate candidate;
  GestureClass label = GestureClass::NoGesture;
};

/// Extracts candidates and labels each with the annotation closest to its
/// end that lies in [start_index, end_index + tolerance]; candidates without
/// one are labeled NoGesture.
std::vector<LabeledCandidate> label_candidates(std::span<const Image> stream,
                                               std::span<const Annotation> annotations,
                                               const DetectorConfig& config = {},
                                               std::size_t tolerance = 10);

}  // namespace tinyann
