#include "tinyann/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tinyann/error.hpp"

namespace tinyann {

namespace {

constexpr std::string_view kGestureNames[] = {"LeftToRight", "RightToLeft", "TopToBottom",
                                              "BottomToTop", "NoGesture"};

std::size_t distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

}  // namespace

std::string_view to_string(GestureClass g) noexcept {
  const auto i = index_of(g);
  return i < kGestureClasses ? kGestureNames[i] : "Invalid";
}

std::optional<GestureClass> gesture_from_string(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kGestureClasses; ++i) {
    if (kGestureNames[i] == name) return static_cast<GestureClass>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Candidate extraction

CandidateExtractor::CandidateExtractor(DetectorConfig config) : config_(config) {}

void CandidateExtractor::reset() { *this = CandidateExtractor(config_); }

void CandidateExtractor::update_rolling(double mean) {
  rolling_ = config_.alpha * *rolling_ + (1.0 - config_.alpha) * mean;
}

std::optional<Candidate> CandidateExtractor::push(const Image& image) {
  const std::size_t t = next_frame_++;
  const double mean = image.mean();

  bool considered = true;
  if (prev_mean_) {
    const double diff = std::abs(mean - *prev_mean_);
    considered = diff == 0.0 || diff < config_.stability * *prev_mean_;
  }
  prev_mean_ = mean;
  if (!rolling_) rolling_ = mean;
  const bool deviating = *rolling_ > 0.0 && std::abs(mean - *rolling_) >= config_.deviation * *rolling_;

  std::optional<Candidate> emitted;
  switch (state_) {
    case State::Idle:
      if (deviating) {
        buffer_.clear();
        buffer_start_ = t;
        for (const auto& [index, frame] : history_) {
          if (index < free_from_) continue;
          if (buffer_.empty()) buffer_start_ = index;
          buffer_.push_back(frame);
        }
        buffer_.push_back(image);
        last_deviating_ = t;
        counted_ = considered ? 1 : 0;
        state_ = State::InRun;
      } else if (considered) {
        update_rolling(mean);
      }
      break;

    case State::InRun:
    case State::Trailing:
      buffer_.push_back(image);
      if (deviating) {
        last_deviating_ = t;
        if (considered) ++counted_;
        state_ = State::InRun;
      } else if (considered) {
        update_rolling(mean);
        state_ = State::Trailing;
      }
      if (state_ == State::Trailing && t >= last_deviating_ + config_.margin) {
        emitted = finish(last_deviating_ + config_.margin, false);
      } else if (buffer_.size() >= config_.capacity) {
        emitted = finish(t, true);
        state_ = State::Overflowed;
      }
      break;

    case State::Overflowed:
      if (!deviating && considered) {
        update_rolling(mean);
        state_ = State::Idle;
      }
      break;
  }

  history_.emplace_back(t, image);
  while (history_.size() > config_.margin) history_.pop_front();
  return emitted;
}

std::optional<Candidate> CandidateExtractor::flush() {
  if (state_ != State::InRun && state_ != State::Trailing) return std::nullopt;
  const std::size_t last = next_frame_ - 1;
  return finish(std::min(last_deviating_ + config_.margin, last), false);
}

std::optional<Candidate> CandidateExtractor::finish(std::size_t end_index, bool truncated) {
  state_ = State::Idle;
  std::optional<Candidate> result;
  if (counted_ >= config_.min_run) {
    Candidate c;
    c.start_index = buffer_start_;
    c.end_index = end_index;
    c.truncated = truncated;
    const std::size_t count = end_index - buffer_start_ + 1;
    c.images.assign(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(count));
    free_from_ = end_index + 1;
    result = std::move(c);
  }
  buffer_.clear();
  counted_ = 0;
  return result;
}

std::vector<Candidate> extract_candidates(std::span<const Image> stream, const DetectorConfig& config) {
  CandidateExtractor extractor(config);
  std::vector<Candidate> out;
  for (const auto& image : stream) {
    if (auto c = extractor.push(image)) out.push_back(std::move(*c));
  }
  if (auto c = extractor.flush()) out.push_back(std::move(*c));
  return out;
}

// ---------------------------------------------------------------------------
// Scaling

double interpolate_at(std::span<const double> samples, double t) {
  if (samples.empty() || t < 0.0 || t > static_cast<double>(samples.size() - 1)) {
    throw Error(ErrorCode::InvalidArgument, "interpolation time outside the recorded range");
  }
  const double floor_t = std::floor(t);
  const auto i = static_cast<std::size_t>(floor_t);
  if (floor_t == t) return samples[i];
  return samples[i] * (floor_t + 1.0 - t) + samples[i + 1] * (t - floor_t);
}

ScaledCandidate scale_candidate(const Candidate& candidate, std::size_t target) {
  const std::size_t n = candidate.images.size();
  if (n < 2) throw Error(ErrorCode::TooShort, "a candidate needs at least two frames to scale");
  if (target < 2) throw Error(ErrorCode::InvalidArgument, "scaling target must be at least two frames");
  const auto& first = candidate.images.front();
  for (const auto& image : candidate.images) {
    if (image.width != first.width || image.height != first.height) {
      throw Error(ErrorCode::ShapeMismatch, "candidate frames differ in size");
    }
  }

  ScaledCandidate out;
  out.width = first.width;
  out.height = first.height;
  const std::size_t pixels = first.size();
  out.values.resize(target * pixels);

  // Sample time j * (n-1) / (target-1), split into integer and fractional
  // parts with integer arithmetic so integral times copy frames exactly.
  const std::size_t denom = target - 1;
  for (std::size_t j = 0; j < target; ++j) {
    const std::size_t numer = j * (n - 1);
    const std::size_t base = numer / denom;
    const std::size_t rem = numer % denom;
    auto dst = std::span<double>(out.values).subspan(j * pixels, pixels);
    const auto& lo = candidate.images[base].pixels;
    if (rem == 0) {
      std::copy(lo.begin(), lo.end(), dst.begin());
      continue;
    }
    const auto& hi = candidate.images[base + 1].pixels;
    const double frac = static_cast<double>(rem) / static_cast<double>(denom);
    for (std::size_t p = 0; p < pixels; ++p) {
      dst[p] = lo[p] * (1.0 - frac) + hi[p] * frac;
    }
  }
  return out;
}

std::vector<double> candidate_features(const ScaledCandidate& scaled) {
  std::vector<double> out(scaled.values.size());
  std::transform(scaled.values.begin(), scaled.values.end(), out.begin(),
                 [](double v) { return v / 1024.0; });
  return out;
}

GestureClass classify_candidate(const ModelSpec& spec, const Parameters& params,
                                const ScaledCandidate& scaled, const ExecOptions& opts) {
  if (spec.features != scaled.values.size() || spec.outputs() != kGestureClasses) {
    throw Error(ErrorCode::ShapeMismatch,
                "classifier expects " + std::to_string(spec.features) + " features and " +
                    std::to_string(kGestureClasses) + " outputs; candidate has " +
                    std::to_string(scaled.values.size()) + " values");
  }
  const auto out = run_ffnn(spec, params, candidate_features(scaled), opts);
  return static_cast<GestureClass>(argmax(out));
}

// ---------------------------------------------------------------------------
// Phase FSM

std::optional<GestureEvent> PhaseFsm::push(std::span<const double> outputs) {
  if (outputs.size() != phase::kStates) {
    throw Error(ErrorCode::ShapeMismatch, "phase outputs need 17 entries");
  }
  return push_state(argmax(outputs));
}

std::optional<GestureEvent> PhaseFsm::push_state(std::size_t state) {
  const std::size_t t = frame_++;
  std::optional<GestureEvent> event;
  if (prev_state_ && state == phase::kInitial && *prev_state_ != phase::kInitial &&
      *prev_state_ % 4 == 0) {
    event = GestureEvent{t, static_cast<GestureClass>(*prev_state_ / 4 - 1)};
  }
  prev_state_ = state;
  return event;
}

void PhaseFsm::reset() noexcept {
  frame_ = 0;
  prev_state_.reset();
}

std::vector<GestureEvent> fsm_postprocess(std::span<const OutputVector> outputs) {
  PhaseFsm fsm;
  std::vector<GestureEvent> events;
  for (const auto& o : outputs) {
    if (auto e = fsm.push(o)) events.push_back(*e);
  }
  return events;
}

// ---------------------------------------------------------------------------
// Recognizers

std::vector<GestureEvent> recognize_candidates(const ModelSpec& spec, const Parameters& params,
                                               std::span<const Image> stream,
                                               const DetectorConfig& config, const ExecOptions& opts) {
  std::vector<GestureEvent> events;
  for (const auto& c : extract_candidates(stream, config)) {
    const auto scaled = scale_candidate(c);
    events.push_back({c.end_index, classify_candidate(spec, params, scaled, opts)});
  }
  return events;
}

namespace {

FrameFeaturizer featurizer_for(const ModelSpec& spec, std::span<const Image> stream) {
  const std::size_t pixels = stream.empty() ? 9 : stream.front().size();
  if (spec.features == pixels) return FrameFeaturizer(false);
  if (spec.features == FrameFeaturizer::feature_count(pixels, true)) return FrameFeaturizer(true);
  throw Error(ErrorCode::ShapeMismatch, "per-frame model needs " + std::to_string(pixels) + " or " +
                                            std::to_string(pixels + 3) + " features");
}

}  // namespace

std::vector<GestureEvent> recognize_phases(const ModelSpec& spec, const Parameters& params,
                                           std::span<const Image> stream, const ExecOptions& opts) {
  if (spec.outputs() != phase::kStates) {
    throw Error(ErrorCode::ShapeMismatch, "phase recognition needs a model with 17 outputs");
  }
  auto featurizer = featurizer_for(spec, stream);
  auto state = RnnState::for_spec(spec);
  PhaseFsm fsm;
  std::vector<GestureEvent> events;
  for (const auto& image : stream) {
    const auto out = step_rnn(spec, params, featurizer.push(image), state, opts);
    if (auto e = fsm.push(out)) events.push_back(*e);
  }
  return events;
}

std::vector<GestureEvent> recognize_rnn_gestures(const ModelSpec& spec, const Parameters& params,
                                                 std::span<const Image> stream,
                                                 const ExecOptions& opts) {
  if (spec.outputs() != kGestureClasses) {
    throw Error(ErrorCode::ShapeMismatch, "gesture recognition needs a model with 5 outputs");
  }
  auto featurizer = featurizer_for(spec, stream);
  auto state = RnnState::for_spec(spec);
  std::vector<GestureEvent> events;
  auto prev = GestureClass::NoGesture;
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const auto out = step_rnn(spec, params, featurizer.push(stream[t]), state, opts);
    const auto cls = static_cast<GestureClass>(argmax(out));
    if (cls != GestureClass::NoGesture && cls != prev) events.push_back({t, cls});
    prev = cls;
  }
  return events;
}

// ---------------------------------------------------------------------------
// Evaluation

AccuracyReport evaluate_accuracy(std::span<const GestureEvent> predictions,
                                 std::span<const Annotation> truth, std::size_t tolerance) {
  AccuracyReport report;
  for (const auto& a : truth) {
    std::vector<const GestureEvent*> window;
    for (const auto& e : predictions) {
      if (e.gesture != GestureClass::NoGesture && distance(e.frame, a.frame) <= tolerance) {
        window.push_back(&e);
      }
    }
    auto predicted = GestureClass::NoGesture;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (const auto* e : window) {
      if (distance(e->frame, a.frame) < best) {
        best = distance(e->frame, a.frame);
        predicted = e->gesture;
      }
    }
    const bool correct = a.label == GestureClass::NoGesture
                             ? window.empty()
                             : window.size() == 1 && window.front()->gesture == a.label;
    ++report.total;
    if (correct) ++report.correct;
    ++report.confusion[index_of(a.label)][index_of(predicted)];
  }
  return report;
}

std::vector<LabeledCandidate> label_candidates(std::span<const Image> stream,
                                               std::span<const Annotation> annotations,
                                               const DetectorConfig& config, std::size_t tolerance) {
  std::vector<LabeledCandidate> out;
  for (auto& c : extract_candidates(stream, config)) {
    auto label = GestureClass::NoGesture;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (const auto& a : annotations) {
      if (a.frame < c.start_index || a.frame > c.end_index + tolerance) continue;
      if (distance(a.frame, c.end_index) < best) {
        best = distance(a.frame, c.end_index);
        label = a.label;
      }
    }
    out.push_back({std::move(c), label});
  }
  return out;
}

}  // namespace tinyann
