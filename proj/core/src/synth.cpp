#include "tinyann/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tinyann/error.hpp"

namespace tinyann {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint16_t to_adc(double v) {
  return static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, static_cast<double>(kAdcMax)));
}

bool is_horizontal(GestureClass g) noexcept {
  return g == GestureClass::LeftToRight || g == GestureClass::RightToLeft;
}

/// Position of a pixel centre along the motion axis of `dir`, in [0, 1].
double motion_coordinate(GestureClass dir, std::size_t x, std::size_t y, std::size_t w, std::size_t h) {
  const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
  const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
  switch (dir) {
    case GestureClass::LeftToRight: return u;
    case GestureClass::RightToLeft: return 1.0 - u;
    case GestureClass::TopToBottom: return v;
    case GestureClass::BottomToTop: return 1.0 - v;
    case GestureClass::NoGesture: break;
  }
  return u;
}

double band_coverage(double u, double lead, double trail, double soft) {
  const double entered = std::clamp((lead - u) / soft + 0.5, 0.0, 1.0);
  const double not_left = std::clamp((u - trail) / soft + 0.5, 0.0, 1.0);
  return entered * not_left;
}

/// Phase state of a band with hard edges at `lead` and `trail` crossing
/// `columns` sensor columns in direction `g`.
std::uint8_t phase_for(GestureClass g, double lead, double trail, std::size_t columns) {
  const double n = static_cast<double>(columns);
  const double first = 0.5 / n;
  const double middle = (static_cast<double>(columns / 2) + 0.5) / n;
  const double last = (n - 0.5) / n;
  if (trail > last || lead < first) return phase::kInitial;
  if (lead < middle) return phase::state(g, 1);
  if (lead < last) return phase::state(g, 2);
  if (trail < first) return phase::state(g, 3);
  return phase::state(g, 4);
}

class Renderer {
 public:
  Renderer(const GestureSynthParams& p, std::uint64_t seed)
      : p_(p), rng_(splitmix64(seed)), noise_(0.0, p.noise_sigma > 0.0 ? p.noise_sigma : 1.0) {}

  template <typename Coverage>
  Image render(Coverage&& coverage) {
    Image image(p_.width, p_.height, std::vector<std::uint16_t>(p_.width * p_.height));
    for (std::size_t y = 0; y < p_.height; ++y) {
      for (std::size_t x = 0; x < p_.width; ++x) {
        double v = p_.background * (1.0 - p_.contrast * coverage(x, y));
        if (p_.noise_sigma > 0.0) v += noise_(rng_);
        if (p_.gamma != 1.0) {
          const double clamped = std::clamp(v, 0.0, static_cast<double>(kAdcMax));
          v = kAdcMax * std::pow(clamped / kAdcMax, p_.gamma);
        }
        image.at(x, y) = to_adc(v);
      }
    }
    return image;
  }

  Image steady() {
    return render([](std::size_t, std::size_t) { return 0.0; });
  }

 private:
  const GestureSynthParams& p_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_;
};

void check_params(const GestureSynthParams& p) {
  auto fail = [](const char* what) { throw Error(ErrorCode::InvalidParams, what); };
  if (!(p.speed > 0.0)) fail("speed must be positive");
  if (!(p.background >= 0.0 && p.background <= kAdcMax)) fail("background must lie in [0, 1023]");
  if (!(p.contrast >= 0.0 && p.contrast <= 1.0)) fail("contrast must lie in [0, 1]");
  if (!(p.noise_sigma >= 0.0)) fail("noise sigma must be non-negative");
  if (!(p.gamma > 0.0)) fail("gamma must be positive");
  if (!(p.occluder_width > 0.0)) fail("occluder width must be positive");
  if (!(p.edge_softness > 0.0)) fail("edge softness must be positive");
  if (p.width == 0 || p.height == 0) fail("image dimensions must be positive");
  if (p.bounce_from == GestureClass::NoGesture) fail("bounce side must be a gesture direction");
  if (!(p.bounce_depth > 0.0 && p.bounce_depth < 1.0)) fail("bounce depth must lie in (0, 1)");
}

void push_frame(AnnotatedSequence& seq, Image image, std::uint8_t phase_state) {
  seq.images.push_back(std::move(image));
  seq.phases.push_back(phase_state);
}

void push_steady(AnnotatedSequence& seq, Renderer& renderer, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) push_frame(seq, renderer.steady(), phase::kInitial);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ull));
}

void append(AnnotatedSequence& head, const AnnotatedSequence& tail) {
  if (head.images.empty()) {
    head.width = tail.width;
    head.height = tail.height;
    if (head.phases.empty()) head.phases = tail.phases;
    else head.phases.clear();
    head.images = tail.images;
    head.annotations = tail.annotations;
    return;
  }
  const bool keep_phases = head.phases.size() == head.images.size() &&
                           tail.phases.size() == tail.images.size();
  const std::size_t offset = head.images.size();
  head.images.insert(head.images.end(), tail.images.begin(), tail.images.end());
  for (auto a : tail.annotations) {
    a.frame += offset;
    head.annotations.push_back(a);
  }
  if (keep_phases) {
    head.phases.insert(head.phases.end(), tail.phases.begin(), tail.phases.end());
  } else {
    head.phases.clear();
  }
}

AnnotatedSequence synthesize_gesture(const GestureSynthParams& p, std::uint64_t seed) {
  check_params(p);
  Renderer renderer(p, seed);
  AnnotatedSequence seq;
  seq.width = p.width;
  seq.height = p.height;
  const double soft = p.edge_softness;

  push_steady(seq, renderer, p.lead_in);

  const bool still = p.contrast == 0.0;
  if (still) {
    // Nothing visible moves; keep the timing of a regular crossing.
    const auto frames = static_cast<std::size_t>(std::ceil(2.0 * p.speed));
    push_steady(seq, renderer, frames);
    seq.annotations.push_back({seq.images.size() - 1, GestureClass::NoGesture});
  } else if (p.direction != GestureClass::NoGesture) {
    const GestureClass dir = p.direction;
    const std::size_t columns = is_horizontal(dir) ? p.width : p.height;
    const double last_column = (static_cast<double>(columns) - 0.5) / static_cast<double>(columns);
    const double travel = 1.0 + p.occluder_width + 2.0 * soft;
    const auto frames = static_cast<std::size_t>(std::ceil(travel * p.speed)) + 1;
    bool annotated = false;
    for (std::size_t k = 0; k < frames; ++k) {
      const double lead = -soft + static_cast<double>(k) / p.speed;
      const double trail = lead - p.occluder_width;
      auto coverage = [&](std::size_t x, std::size_t y) {
        return band_coverage(motion_coordinate(dir, x, y, p.width, p.height), lead, trail, soft);
      };
      push_frame(seq, renderer.render(coverage), phase_for(dir, lead, trail, columns));
      if (!annotated && trail > last_column) {
        seq.annotations.push_back({seq.images.size() - 1, dir});
        annotated = true;
      }
    }
    if (!annotated) seq.annotations.push_back({seq.images.size() - 1, dir});
  } else if (p.non_gesture_motion == NonGestureMotion::Approach) {
    const auto ramp = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(p.speed / 2.0)));
    std::vector<double> levels;
    for (std::size_t k = 1; k <= ramp; ++k) levels.push_back(static_cast<double>(k) / ramp);
    levels.insert(levels.end(), p.hold, 1.0);
    for (std::size_t k = ramp; k-- > 1;) levels.push_back(static_cast<double>(k) / ramp);
    for (double level : levels) {
      push_frame(seq, renderer.render([&](std::size_t, std::size_t) { return level; }), phase::kInitial);
    }
    push_frame(seq, renderer.steady(), phase::kInitial);
    seq.annotations.push_back({seq.images.size() - 1, GestureClass::NoGesture});
  } else {
    const GestureClass side = p.bounce_from;
    const std::size_t columns = is_horizontal(side) ? p.width : p.height;
    const auto in_frames = static_cast<std::size_t>(std::ceil((p.bounce_depth + soft) * p.speed));
    std::vector<double> leads;
    for (std::size_t k = 0; k <= in_frames; ++k) leads.push_back(-soft + static_cast<double>(k) / p.speed);
    leads.insert(leads.end(), p.hold, leads.back());
    for (std::size_t k = in_frames; k-- > 0;) leads.push_back(leads[k]);
    for (double lead : leads) {
      const double trail = lead - p.occluder_width;
      auto coverage = [&](std::size_t x, std::size_t y) {
        return band_coverage(motion_coordinate(side, x, y, p.width, p.height), lead, trail, soft);
      };
      push_frame(seq, renderer.render(coverage), phase_for(side, lead, trail, columns));
    }
    push_frame(seq, renderer.steady(), phase::kInitial);
    seq.annotations.push_back({seq.images.size() - 1, GestureClass::NoGesture});
  }

  push_steady(seq, renderer, p.lead_out);
  return seq;
}

GestureClass remap(GestureClass g, TransformKind kind) noexcept {
  using G = GestureClass;
  if (g == G::NoGesture) return g;
  switch (kind) {
    case TransformKind::MirrorX:
      if (g == G::LeftToRight) return G::RightToLeft;
      if (g == G::RightToLeft) return G::LeftToRight;
      return g;
    case TransformKind::MirrorY:
      if (g == G::TopToBottom) return G::BottomToTop;
      if (g == G::BottomToTop) return G::TopToBottom;
      return g;
    case TransformKind::Rotate90:
      switch (g) {
        case G::LeftToRight: return G::TopToBottom;
        case G::TopToBottom: return G::RightToLeft;
        case G::RightToLeft: return G::BottomToTop;
        default: return G::LeftToRight;
      }
    case TransformKind::Rotate180:
      return remap(remap(g, TransformKind::Rotate90), TransformKind::Rotate90);
    case TransformKind::Rotate270:
      return remap(remap(g, TransformKind::Rotate180), TransformKind::Rotate90);
    default:
      return g;
  }
}

std::uint8_t remap_phase(std::uint8_t state, TransformKind kind) noexcept {
  if (state == phase::kInitial || state >= phase::kStates) return state;
  const auto g = static_cast<GestureClass>((state - 1) / 4);
  return phase::state(remap(g, kind), (state - 1) % 4 + 1);
}

AnnotatedSequence augment(const AnnotatedSequence& seq, const Transform& transform) {
  AnnotatedSequence out = seq;
  const std::size_t w = seq.width;
  const std::size_t h = seq.height;
  const auto kind = transform.kind;

  if (is_geometric(kind)) {
    const bool rotation = kind == TransformKind::Rotate90 || kind == TransformKind::Rotate180 ||
                          kind == TransformKind::Rotate270;
    if (rotation && w != h) {
      throw Error(ErrorCode::NonSquareImage, "rotations need square frames");
    }
    for (std::size_t i = 0; i < seq.images.size(); ++i) {
      const auto& src = seq.images[i];
      auto& dst = out.images[i];
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          std::uint16_t v = 0;
          switch (kind) {
            case TransformKind::MirrorX: v = src.at(w - 1 - x, y); break;
            case TransformKind::MirrorY: v = src.at(x, h - 1 - y); break;
            case TransformKind::Rotate90: v = src.at(y, w - 1 - x); break;
            case TransformKind::Rotate180: v = src.at(w - 1 - x, h - 1 - y); break;
            case TransformKind::Rotate270: v = src.at(h - 1 - y, x); break;
            default: break;
          }
          dst.at(x, y) = v;
        }
      }
    }
    for (auto& a : out.annotations) a.label = remap(a.label, kind);
    for (auto& s : out.phases) s = remap_phase(s, kind);
    return out;
  }

  std::mt19937_64 rng(splitmix64(transform.seed));
  std::normal_distribution<double> noise(0.0, transform.amount > 0.0 ? transform.amount : 1.0);
  if (kind == TransformKind::Gamma && !(transform.amount > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "gamma must be positive");
  }
  if (kind == TransformKind::Noise && transform.amount < 0.0) {
    throw Error(ErrorCode::InvalidParams, "noise sigma must be non-negative");
  }
  for (auto& image : out.images) {
    for (auto& px : image.pixels) {
      const double v = px;
      switch (kind) {
        case TransformKind::Brightness:
          px = to_adc(v + transform.amount);
          break;
        case TransformKind::Gamma:
          px = to_adc(kAdcMax * std::pow(v / kAdcMax, transform.amount));
          break;
        case TransformKind::Noise:
          px = to_adc(transform.amount > 0.0 ? v + noise(rng) : v);
          break;
        default:
          break;
      }
    }
  }
  return out;
}

AnnotatedSequence auto_annotate(std::span<const Image> stream,
                                std::pair<GestureClass, GestureClass> protocol,
                                const DetectorConfig& config) {
  AnnotatedSequence seq;
  if (!stream.empty()) {
    seq.width = stream.front().width;
    seq.height = stream.front().height;
  }
  seq.images.assign(stream.begin(), stream.end());
  std::size_t n = 0;
  for (const auto& c : extract_candidates(stream, config)) {
    seq.annotations.push_back({c.end_index, n++ % 2 == 0 ? protocol.first : protocol.second});
  }
  return seq;
}

AnnotatedSequence synthesize_corpus(const CorpusConfig& config) {
  std::vector<GestureClass> order;
  order.reserve(config.per_class * kGestureClasses);
  for (std::size_t i = 0; i < config.per_class; ++i) {
    for (std::size_t c = 0; c < kGestureClasses; ++c) order.push_back(static_cast<GestureClass>(c));
  }
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  std::mt19937_64 rng(derive_seed(config.seed, 2));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const bool square = config.width == config.height;
  constexpr TransformKind kSymmetries[] = {TransformKind::MirrorX, TransformKind::MirrorY,
                                           TransformKind::Rotate90, TransformKind::Rotate180,
                                           TransformKind::Rotate270};

  AnnotatedSequence corpus;
  corpus.width = config.width;
  corpus.height = config.height;
  const std::size_t session_size = std::max<std::size_t>(1, config.session_size);

  for (std::size_t start = 0; start < order.size(); start += session_size) {
    const double background = uniform(config.background_min, config.background_max);
    const double brightness = uniform(-config.brightness_max, config.brightness_max);
    const double gamma = uniform(config.gamma_min, config.gamma_max);

    AnnotatedSequence session;
    const std::size_t stop = std::min(order.size(), start + session_size);
    for (std::size_t i = start; i < stop; ++i) {
      const GestureClass cls = order[i];
      GestureSynthParams p;
      p.width = config.width;
      p.height = config.height;
      p.background = background;
      p.speed = uniform(config.speed_min, config.speed_max);
      p.occluder_width = uniform(config.occluder_min, config.occluder_max);
      p.contrast = uniform(config.contrast_min, config.contrast_max);
      p.noise_sigma = uniform(0.0, config.noise_max);
      p.lead_in = config.gap;
      p.lead_out = config.gap;
      p.direction = (cls == GestureClass::NoGesture || !square) ? cls : GestureClass::LeftToRight;
      p.non_gesture_motion = uniform(0.0, 1.0) < 0.5 ? NonGestureMotion::Approach : NonGestureMotion::Bounce;
      p.bounce_depth = uniform(0.45, 0.75);
      p.hold = static_cast<std::size_t>(uniform(6.0, 18.0));
      const std::size_t symmetry = static_cast<std::size_t>(uniform(0.0, 6.0));

      auto instance = synthesize_gesture(p, derive_seed(config.seed, 1000 + i));
      if (square) {
        switch (cls) {
          case GestureClass::RightToLeft:
            instance = augment(instance, Transform::geometric(TransformKind::MirrorX));
            break;
          case GestureClass::TopToBottom:
            instance = augment(instance, Transform::geometric(TransformKind::Rotate90));
            break;
          case GestureClass::BottomToTop:
            instance = augment(instance, Transform::geometric(TransformKind::Rotate270));
            break;
          case GestureClass::NoGesture:
            if (symmetry < 5) instance = augment(instance, Transform::geometric(kSymmetries[symmetry]));
            break;
          case GestureClass::LeftToRight:
            break;
        }
      }
      append(session, instance);
    }
    session = augment(session, Transform::brightness(brightness));
    session = augment(session, Transform::gamma(gamma));

    if (!corpus.images.empty()) {
      // Join sessions with a slow ramp so the background change never looks
      // like a movement to the candidate detector.
      const Image& from = corpus.images.back();
      const Image& to = session.images.front();
      const double ratio = std::max(from.mean(), 1.0) / std::max(to.mean(), 1.0);
      const auto ramp = std::max(config.gap, static_cast<std::size_t>(std::ceil(std::abs(std::log(ratio)) / 0.002)));
      AnnotatedSequence bridge;
      bridge.width = config.width;
      bridge.height = config.height;
      for (std::size_t k = 1; k <= ramp; ++k) {
        const double f = static_cast<double>(k) / static_cast<double>(ramp + 1);
        Image frame = from;
        for (std::size_t px = 0; px < frame.pixels.size(); ++px) {
          frame.pixels[px] = to_adc(from.pixels[px] * (1.0 - f) + to.pixels[px] * f);
        }
        bridge.images.push_back(std::move(frame));
        bridge.phases.push_back(phase::kInitial);
      }
      append(corpus, bridge);
    }
    append(corpus, session);
  }
  return corpus;
}

std::vector<ScaledCandidate> clutter_candidates(std::size_t count, std::size_t width,
                                                std::size_t height, std::uint64_t seed,
                                                std::size_t frames) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_int_distribution<int> pixel(0, kAdcMax);
  std::vector<ScaledCandidate> out(count);
  for (auto& c : out) {
    c.width = width;
    c.height = height;
    c.values.resize(frames * width * height);
    for (auto& v : c.values) v = pixel(rng);
  }
  return out;
}

}  // namespace tinyann
