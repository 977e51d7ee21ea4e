#include "tinyann/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace tinyann {

namespace {

struct ActivationName {
  Activation activation;
  std::string_view name;
};

constexpr ActivationName kActivationNames[] = {
    {Activation::Sigmoid, "sigmoid"},
    {Activation::Tanh, "tanh"},
    {Activation::HardSigmoid, "hardsigmoid"},
    {Activation::Softsign, "softsign"},
    {Activation::Relu, "relu"},
    {Activation::Softmax, "softmax"},
    {Activation::ApproxSoftmax, "approxsoftmax"},
    {Activation::Max, "max"},
};

std::string describe_layer(std::size_t index) { return "layer " + std::to_string(index); }

}  // namespace

std::string_view to_string(Activation a) noexcept {
  for (const auto& entry : kActivationNames) {
    if (entry.activation == a) return entry.name;
  }
  return "unknown";
}

std::optional<Activation> activation_from_string(std::string_view name) noexcept {
  std::string lowered(name);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::erase(lowered, '_');
  std::erase(lowered, '-');
  for (const auto& entry : kActivationNames) {
    if (entry.name == lowered) return entry.activation;
  }
  return std::nullopt;
}

ModelSpec ModelSpec::chain(std::size_t features, std::span<const LayerShape> shapes) {
  ModelSpec spec;
  spec.features = features;
  std::size_t input = features;
  for (const auto& shape : shapes) {
    spec.layers.push_back({shape.kind, input, shape.neurons, shape.activation});
    input = shape.neurons;
  }
  return spec;
}

bool ModelSpec::has_recurrent() const noexcept {
  return std::any_of(layers.begin(), layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::Recurrent; });
}

void validate(const ModelSpec& spec) {
  if (spec.features == 0) throw Error(ErrorCode::ShapeMismatch, "model has no features");
  if (spec.layers.empty()) throw Error(ErrorCode::ShapeMismatch, "model has no layers");
  std::size_t expected_input = spec.features;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (layer.neurons == 0 || layer.input_size == 0) {
      throw Error(ErrorCode::ShapeMismatch, describe_layer(i) + " has a zero dimension");
    }
    if (layer.input_size != expected_input) {
      throw Error(ErrorCode::ShapeMismatch,
                  describe_layer(i) + " expects " + std::to_string(layer.input_size) +
                      " inputs but receives " + std::to_string(expected_input));
    }
    // Max outputs are one-hot; fed back they would differ from the Softmax
    // values the layer was trained with.
    if (layer.kind == LayerKind::Recurrent && layer.activation == Activation::Max) {
      throw Error(ErrorCode::IllegalActivationPlacement,
                  describe_layer(i) + " is recurrent and cannot use Max");
    }
    expected_input = layer.neurons;
  }
}

void validate(const ModelSpec& spec, const Parameters& params) {
  validate(spec);
  if (params.layers.size() != spec.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter layer count differs from spec");
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    const auto& p = params.layers[i];
    if (p.weights.rows != layer.neurons || p.weights.cols != layer.fan_in() ||
        p.weights.data.size() != layer.weight_count()) {
      throw Error(ErrorCode::ShapeMismatch, describe_layer(i) + " weight matrix has wrong shape");
    }
    if (p.biases.size() != layer.neurons) {
      throw Error(ErrorCode::ShapeMismatch, describe_layer(i) + " bias vector has wrong length");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(p.weights.data.begin(), p.weights.data.end(), finite) ||
        !std::all_of(p.biases.begin(), p.biases.end(), finite)) {
      throw Error(ErrorCode::NonFiniteParameter, describe_layer(i) + " holds a non-finite value");
    }
  }
}

Parameters Parameters::zeros(const ModelSpec& spec) {
  Parameters params;
  params.layers.reserve(spec.layers.size());
  for (const auto& layer : spec.layers) {
    params.layers.push_back({Matrix(layer.neurons, layer.fan_in()), std::vector<double>(layer.neurons)});
  }
  return params;
}

RnnState RnnState::for_spec(const ModelSpec& spec) {
  RnnState state;
  state.prev_activations.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::Recurrent) {
      state.prev_activations[i].assign(spec.layers[i].neurons, 0.0);
    }
  }
  return state;
}

void RnnState::reset() noexcept {
  for (auto& v : prev_activations) std::fill(v.begin(), v.end(), 0.0);
}

ModelSpec parse_architecture(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('-', start);
    if (end == std::string_view::npos) end = text.size();
    tokens.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (tokens.size() < 2) {
    throw Error(ErrorCode::ParseError, "architecture needs features and at least one layer: '" +
                                           std::string(text) + "'");
  }

  auto parse_count = [&](std::string_view digits, std::string_view token) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr == digits.data() || value == 0) {
      throw Error(ErrorCode::ParseError, "bad count in token '" + std::string(token) + "'");
    }
    return std::pair{value, static_cast<std::size_t>(ptr - digits.data())};
  };

  auto [features, used] = parse_count(tokens[0], tokens[0]);
  if (used != tokens[0].size()) {
    throw Error(ErrorCode::ParseError, "feature token must be a number: '" + std::string(tokens[0]) + "'");
  }

  std::vector<LayerShape> shapes;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    std::string_view token = tokens[i];
    LayerShape shape;
    if (!token.empty() && (token.front() == 'r' || token.front() == 'R')) {
      shape.kind = LayerKind::Recurrent;
      token.remove_prefix(1);
    }
    auto [neurons, digits] = parse_count(token, tokens[i]);
    shape.neurons = neurons;
    auto act = activation_from_string(token.substr(digits));
    if (!act) {
      throw Error(ErrorCode::ParseError, "unknown activation in token '" + std::string(tokens[i]) + "'");
    }
    shape.activation = *act;
    shapes.push_back(shape);
  }
  return ModelSpec::chain(features, shapes);
}

std::string format_architecture(const ModelSpec& spec) {
  std::string out = std::to_string(spec.features);
  for (const auto& layer : spec.layers) {
    out += '-';
    if (layer.kind == LayerKind::Recurrent) out += 'r';
    out += std::to_string(layer.neurons);
    out += to_string(layer.activation);
  }
  return out;
}

}  // namespace tinyann
