#include "tinyann/features.hpp"

#include <algorithm>
#include <numeric>

#include "tinyann/error.hpp"

namespace tinyann {

double Image::mean() const noexcept {
  if (pixels.empty()) return 0.0;
  const double sum = std::accumulate(pixels.begin(), pixels.end(), 0.0);
  return sum / static_cast<double>(pixels.size());
}

void validate(const Image& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
    throw Error(ErrorCode::ShapeMismatch, "image pixel count does not match its dimensions");
  }
  for (auto p : image.pixels) {
    if (p > kAdcMax) {
      throw Error(ErrorCode::PixelOutOfRange, "pixel value " + std::to_string(p) + " exceeds 1023");
    }
  }
}

std::vector<double> normalize(const Image& image) {
  validate(image);
  std::vector<double> out(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), out.begin(),
                 [](std::uint16_t p) { return static_cast<double>(p) / 1024.0; });
  return out;
}

void update_rolling_in_place(RollingStats& stats, std::span<const double> s) {
  if (!stats.initialized || stats.avg.size() != s.size()) {
    stats.avg.assign(s.begin(), s.end());
    stats.min = stats.avg;
    stats.max = stats.avg;
    stats.initialized = true;
    return;
  }
  const double a = stats.alpha;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double prev_avg = stats.avg[i];
    stats.avg[i] = a * prev_avg + (1.0 - a) * s[i];
    stats.min[i] = std::min(s[i], a * stats.min[i] + (1.0 - a) * prev_avg);
    stats.max[i] = std::max(s[i], a * stats.max[i] + (1.0 - a) * prev_avg);
  }
}

RollingStats update_rolling(RollingStats stats, const Image& image) {
  update_rolling_in_place(stats, normalize(image));
  return stats;
}

std::vector<double> build_features(const Image& image, const RollingStats* stats) {
  auto features = normalize(image);
  if (stats == nullptr) return features;
  if (!stats->initialized || stats->avg.size() != features.size()) {
    throw Error(ErrorCode::ShapeMismatch, "rolling stats do not match the image");
  }
  auto mean_of = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  features.push_back(mean_of(stats->avg));
  features.push_back(mean_of(stats->min));
  features.push_back(mean_of(stats->max));
  return features;
}

FrameFeaturizer::FrameFeaturizer(bool with_rolling, double alpha) : with_rolling_(with_rolling) {
  stats_.alpha = alpha;
}

std::vector<double> FrameFeaturizer::push(const Image& image) {
  if (!with_rolling_) return normalize(image);
  update_rolling_in_place(stats_, normalize(image));
  return build_features(image, &stats_);
}

void FrameFeaturizer::reset() {
  const double alpha = stats_.alpha;
  stats_ = RollingStats{};
  stats_.alpha = alpha;
}

}  // namespace tinyann
