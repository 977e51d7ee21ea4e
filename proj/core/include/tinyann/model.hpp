#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinyann/error.hpp"

namespace tinyann {

enum class Activation {
  Sigmoid,
  Tanh,
  HardSigmoid,
  Softsign,
  Relu,
  Softmax,
  ApproxSoftmax,
  Max,
};

inline constexpr Activation kAllActivations[] = {
    Activation::Sigmoid, Activation::Tanh,    Activation::HardSigmoid,
    Activation::Softsign, Activation::Relu,   Activation::Softmax,
    Activation::ApproxSoftmax, Activation::Max,
};

/// Softmax, ApproxSoftmax and Max need every pre-activation of the layer.
constexpr bool is_layerwise(Activation a) noexcept {
  return a == Activation::Softmax || a == Activation::ApproxSoftmax || a == Activation::Max;
}

std::string_view to_string(Activation a) noexcept;
std::optional<Activation> activation_from_string(std::string_view name) noexcept;

enum class LayerKind { Dense, Recurrent };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t input_size = 0;
  std::size_t neurons = 0;
  Activation activation = Activation::Relu;

  /// Recurrent neurons also see the previous step's activations of their layer.
  std::size_t fan_in() const noexcept {
    return kind == LayerKind::Recurrent ? input_size + neurons : input_size;
  }
  std::size_t weight_count() const noexcept { return neurons * fan_in(); }

  bool operator==(const LayerSpec&) const = default;
};

/// Layer shape as written by a user; input sizes are filled in by chaining.
struct LayerShape {
  LayerKind kind = LayerKind::Dense;
  std::size_t neurons = 0;
  Activation activation = Activation::Relu;
};

struct ModelSpec {
  std::size_t features = 0;
  std::vector<LayerSpec> layers;

  /// Builds a spec whose layer input sizes chain from `features`.
  static ModelSpec chain(std::size_t features, std::span<const LayerShape> shapes);
  static ModelSpec chain(std::size_t features, std::initializer_list<LayerShape> shapes) {
    return chain(features, std::span<const LayerShape>(shapes.begin(), shapes.size()));
  }

  std::size_t outputs() const noexcept { return layers.empty() ? 0 : layers.back().neurons; }
  bool has_recurrent() const noexcept;

  bool operator==(const ModelSpec&) const = default;
};

/// Checks shape chaining and activation placement of a spec on its own.
void validate(const ModelSpec& spec);

/// Parses compact architecture strings such as "180-8relu-5softmax" or
/// "12-9relu-9relu-r17softmax". The first token is the feature count; each
/// further token is an optional 'r' (recurrent), the neuron count and the
/// activation name. Throws Error(ParseError) on malformed input.
ModelSpec parse_architecture(std::string_view text);
std::string format_architecture(const ModelSpec& spec);

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols, cols);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data).subspan(r * cols, cols); }

  std::size_t size() const noexcept { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

/// Weights are [neurons x fan_in]; for recurrent layers the feedback columns
/// trail the external input columns.
struct LayerParams {
  Matrix weights;
  std::vector<double> biases;

  bool operator==(const LayerParams&) const = default;
};

struct Parameters {
  std::vector<LayerParams> layers;

  /// Zero-filled parameters shaped for `spec`.
  static Parameters zeros(const ModelSpec& spec);

  bool operator==(const Parameters&) const = default;
};

/// Throws ShapeMismatch, NonFiniteParameter or IllegalActivationPlacement.
void validate(const ModelSpec& spec, const Parameters& params);

/// Previous-step activations for each recurrent layer. Entries for dense
/// layers stay empty.
struct RnnState {
  std::vector<std::vector<double>> prev_activations;

  static RnnState for_spec(const ModelSpec& spec);
  void reset() noexcept;
};

}  // namespace tinyann
