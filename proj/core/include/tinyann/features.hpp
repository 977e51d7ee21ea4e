#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tinyann {

/// Largest value a 10-bit ADC reading can take.
inline constexpr std::uint16_t kAdcMax = 1023;

/// One frame of light values, row-major (index = y * width + x, x grows to
/// the right and y grows downwards).
struct Image {
  std::size_t width = 3;
  std::size_t height = 3;
  std::vector<std::uint16_t> pixels;

  Image() : pixels(9, 0) {}
  Image(std::size_t w, std::size_t h, std::vector<std::uint16_t> px)
      : width(w), height(h), pixels(std::move(px)) {}

  static Image filled(std::size_t w, std::size_t h, std::uint16_t value) {
    return Image(w, h, std::vector<std::uint16_t>(w * h, value));
  }

  std::size_t size() const noexcept { return pixels.size(); }
  std::uint16_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::uint16_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }

  /// Mean brightness in ADC counts.
  double mean() const noexcept;

  bool operator==(const Image&) const = default;
};

/// Throws ShapeMismatch or PixelOutOfRange.
void validate(const Image& image);

/// Each pixel divided by 1024, so values land in [0, 1).
std::vector<double> normalize(const Image& image);

/// Exponentially weighted per-pixel average, minimum and maximum of the
/// normalized light values.
struct RollingStats {
  double alpha = 0.99;
  bool initialized = false;
  std::vector<double> avg;
  std::vector<double> min;
  std::vector<double> max;
};

/// The first image seeds avg = min = max; later images follow
///   avg' = a avg + (1-a) s
///   min' = min(s, a min + (1-a) avg)
///   max' = max(s, a max + (1-a) avg)
RollingStats update_rolling(RollingStats stats, const Image& image);
void update_rolling_in_place(RollingStats& stats, std::span<const double> normalized);

/// Normalized pixels, followed by the pixel means of the rolling avg, min and
/// max tracks when `stats` is given (9 or 12 features for a 3x3 image).
std::vector<double> build_features(const Image& image, const RollingStats* stats);

/// Per-stream featurizer for the recurrent recognizers.
class FrameFeaturizer {
 public:
  explicit FrameFeaturizer(bool with_rolling, double alpha = 0.99);

  std::vector<double> push(const Image& image);
  void reset();

  bool with_rolling() const noexcept { return with_rolling_; }
  static std::size_t feature_count(std::size_t pixels, bool with_rolling) noexcept {
    return pixels + (with_rolling ? 3 : 0);
  }

 private:
  bool with_rolling_;
  RollingStats stats_;
};

}  // namespace tinyann
