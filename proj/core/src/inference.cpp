#include "tinyann/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tinyann {

namespace {

// Largest |x| for which 2^x stays inside the normal float exponent range.
constexpr double kPow2Limit = 126.0;

double sigmoid(double x, ExpMode mode) {
  if (mode == ExpMode::Exact) return 1.0 / (1.0 + std::exp(-x));
  const double scaled = -x / std::numbers::ln2;
  if (scaled > kPow2Limit) return 0.0;
  if (scaled < -kPow2Limit) return 1.0;
  return 1.0 / (1.0 + approx_pow2(scaled));
}

void check_inputs(const LayerParams& params, std::size_t fan_in, std::size_t given) {
  if (given != fan_in || params.weights.cols != fan_in) {
    throw Error(ErrorCode::ShapeMismatch, "layer expects " + std::to_string(params.weights.cols) +
                                              " inputs, got " + std::to_string(given));
  }
}

}  // namespace

double approx_pow2(double x) {
  if (!(std::abs(x) <= kPow2Limit)) {
    throw Error(ErrorCode::RangeExceeded, "approx_pow2 argument outside [-126, 126]");
  }
  const double n = std::floor(x);
  const double v = x - n;
  return std::ldexp(1.0 + (2.0 / 3.0) * v + (1.0 / 3.0) * v * v, static_cast<int>(n));
}

double approx_exp(double x) { return approx_pow2(x / std::numbers::ln2); }

double eval_activation(Activation kind, double x, ExpMode mode) {
  switch (kind) {
    case Activation::Sigmoid:
      return sigmoid(x, mode);
    case Activation::Tanh:
      return mode == ExpMode::Exact ? std::tanh(x) : 2.0 * sigmoid(2.0 * x, mode) - 1.0;
    case Activation::HardSigmoid:
      if (x < -2.5) return 0.0;
      if (x > 2.5) return 1.0;
      return 0.2 * x + 0.5;
    case Activation::Softsign:
      return x / (1.0 + std::abs(x));
    case Activation::Relu:
      return x >= 0.0 ? x : 0.0;
    case Activation::Softmax:
    case Activation::ApproxSoftmax:
    case Activation::Max:
      break;
  }
  throw Error(ErrorCode::LayerwiseKind,
              std::string(to_string(kind)) + " needs the whole layer; use eval_layer_activation");
}

std::vector<double> eval_layer_activation(Activation kind, std::span<const double> z) {
  if (!is_layerwise(kind)) {
    throw Error(ErrorCode::LayerwiseKind, std::string(to_string(kind)) + " is element-wise");
  }
  if (z.empty()) throw Error(ErrorCode::EmptyLayer, "layer-wise activation on an empty layer");

  std::vector<double> out(z.size(), 0.0);
  if (kind == Activation::Max) {
    out[argmax(z)] = 1.0;
    return out;
  }

  // Shifting by the maximum leaves Softmax unchanged and keeps every
  // exponent argument <= 0.
  const double shift = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double arg = z[i] - shift;
    double e = 0.0;
    if (kind == Activation::Softmax) {
      e = std::exp(arg);
    } else if (arg / std::numbers::ln2 >= -kPow2Limit) {
      e = approx_exp(arg);
    }
    out[i] = e;
    sum += e;
  }
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<double> apply_activation(Activation kind, std::span<const double> z, ExpMode mode) {
  if (is_layerwise(kind)) return eval_layer_activation(kind, z);
  std::vector<double> out(z.size());
  std::transform(z.begin(), z.end(), out.begin(),
                 [&](double v) { return eval_activation(kind, v, mode); });
  return out;
}

std::vector<double> affine(const LayerParams& params, std::span<const double> inputs,
                           MacCounter* counter) {
  const auto& w = params.weights;
  check_inputs(params, w.cols, inputs.size());
  std::vector<double> z(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const auto row = w.row(r);
    double sum = params.biases[r];
    for (std::size_t c = 0; c < w.cols; ++c) sum += row[c] * inputs[c];
    z[r] = sum;
  }
  if (counter) counter->add(w.rows * w.cols);
  return z;
}

std::vector<double> forward_dense(const LayerSpec& layer, const LayerParams& params,
                                  std::span<const double> inputs, const ExecOptions& opts) {
  if (inputs.size() != layer.input_size || params.weights.rows != layer.neurons ||
      params.biases.size() != layer.neurons) {
    throw Error(ErrorCode::ShapeMismatch, "dense layer input or parameter shape mismatch");
  }
  const auto z = affine(params, inputs, opts.counter);
  return apply_activation(layer.activation, z, opts.exp_mode);
}

std::vector<double> step_recurrent(const LayerSpec& layer, const LayerParams& params,
                                   std::span<const double> inputs, std::span<double> state,
                                   const ExecOptions& opts) {
  if (inputs.size() != layer.input_size || state.size() != layer.neurons ||
      params.weights.rows != layer.neurons || params.biases.size() != layer.neurons) {
    throw Error(ErrorCode::ShapeMismatch, "recurrent layer input, state or parameter shape mismatch");
  }
  std::vector<double> extended(inputs.begin(), inputs.end());
  extended.insert(extended.end(), state.begin(), state.end());
  const auto z = affine(params, extended, opts.counter);
  auto out = apply_activation(layer.activation, z, opts.exp_mode);
  std::copy(out.begin(), out.end(), state.begin());
  return out;
}

OutputVector run_ffnn(const ModelSpec& spec, const Parameters& params,
                      std::span<const double> features, const ExecOptions& opts) {
  if (spec.has_recurrent()) {
    throw Error(ErrorCode::RecurrentLayerPresent, "run_ffnn needs an all-dense model");
  }
  if (features.size() != spec.features || params.layers.size() != spec.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(spec.features) +
                                              " features, got " + std::to_string(features.size()));
  }
  std::vector<double> x(features.begin(), features.end());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    x = forward_dense(spec.layers[i], params.layers[i], x, opts);
  }
  return x;
}

OutputVector step_rnn(const ModelSpec& spec, const Parameters& params,
                      std::span<const double> features, RnnState& state, const ExecOptions& opts) {
  if (features.size() != spec.features || params.layers.size() != spec.layers.size() ||
      state.prev_activations.size() != spec.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "step_rnn feature, parameter or state shape mismatch");
  }
  std::vector<double> x(features.begin(), features.end());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (layer.kind == LayerKind::Recurrent) {
      x = step_recurrent(layer, params.layers[i], x, state.prev_activations[i], opts);
    } else {
      x = forward_dense(layer, params.layers[i], x, opts);
    }
  }
  return x;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyLayer, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace tinyann
