#include "tinyann/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tinyann/error.hpp"
#include "tinyann/inference.hpp"

namespace tinyann {

namespace {

struct LayerTrace {
  std::vector<double> input;  // external inputs followed by feedback for recurrent layers
  std::vector<double> z;
  std::vector<double> a;
};
using StepTrace = std::vector<LayerTrace>;

Activation training_activation(Activation a) { return is_layerwise(a) ? Activation::Softmax : a; }

void check_trainable(const ModelSpec& spec, const Parameters& params) {
  validate(spec, params);
  if (spec.layers.empty()) throw Error(ErrorCode::EmptyLayer, "model has no layers");
  if (!is_layerwise(spec.layers.back().activation)) {
    throw Error(ErrorCode::IllegalActivationPlacement,
                "training needs a Softmax-type output layer for the cross-entropy loss");
  }
}

Parameters zeros_like(const Parameters& params) {
  Parameters g;
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix(l.weights.rows, l.weights.cols), std::vector<double>(l.biases.size(), 0.0)});
  }
  return g;
}

void clear(Parameters& g) {
  for (auto& l : g.layers) {
    std::fill(l.weights.data.begin(), l.weights.data.end(), 0.0);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
}

StepTrace forward_step(const ModelSpec& spec, const Parameters& params, std::span<const double> x,
                       std::vector<std::vector<double>>& state) {
  if (x.size() != spec.features) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(spec.features) +
                                              " features, got " + std::to_string(x.size()));
  }
  StepTrace trace(spec.layers.size());
  std::span<const double> current = x;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    auto& t = trace[l];
    t.input.assign(current.begin(), current.end());
    if (layer.kind == LayerKind::Recurrent) t.input.insert(t.input.end(), state[l].begin(), state[l].end());
    t.z = affine(params.layers[l], t.input);
    t.a = apply_activation(training_activation(layer.activation), t.z);
    if (layer.kind == LayerKind::Recurrent) state[l] = t.a;
    current = t.a;
  }
  return trace;
}

std::vector<double> activation_backward(Activation kind, const LayerTrace& t, std::span<const double> da) {
  const std::size_t n = t.z.size();
  std::vector<double> dz(n);
  if (is_layerwise(kind)) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += da[i] * t.a[i];
    for (std::size_t i = 0; i < n; ++i) dz[i] = t.a[i] * (da[i] - dot);
    return dz;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double z = t.z[i];
    const double a = t.a[i];
    double d = 0.0;
    switch (kind) {
      case Activation::Sigmoid: d = a * (1.0 - a); break;
      case Activation::Tanh: d = 1.0 - a * a; break;
      case Activation::HardSigmoid: d = (z > -2.5 && z < 2.5) ? 0.2 : 0.0; break;
      case Activation::Softsign: d = 1.0 / ((1.0 + std::abs(z)) * (1.0 + std::abs(z))); break;
      case Activation::Relu: d = z > 0.0 ? 1.0 : 0.0; break;
      default: break;
    }
    dz[i] = d * da[i];
  }
  return dz;
}

/// Accumulates one step's gradient. `carry` holds dL/da(t) of every
/// recurrent layer coming from step t + 1 and is replaced by dL/da(t - 1).
void backward_step(const ModelSpec& spec, const Parameters& params, const StepTrace& trace, int target,
                   double scale, std::vector<std::vector<double>>& carry, Parameters& grads) {
  const std::size_t layers = spec.layers.size();
  std::vector<double> from_above;
  for (std::size_t l = layers; l-- > 0;) {
    const auto& layer = spec.layers[l];
    const auto& t = trace[l];
    const auto& w = params.layers[l].weights;
    const bool recurrent = layer.kind == LayerKind::Recurrent;

    std::vector<double> da(layer.neurons, 0.0);
    if (l + 1 < layers) da = from_above;
    if (recurrent) {
      for (std::size_t i = 0; i < layer.neurons; ++i) da[i] += carry[l][i];
    }
    auto dz = activation_backward(training_activation(layer.activation), t, da);
    if (l + 1 == layers && target >= 0) {
      for (std::size_t i = 0; i < layer.neurons; ++i) {
        dz[i] += scale * (t.a[i] - (static_cast<std::size_t>(target) == i ? 1.0 : 0.0));
      }
    }

    auto& g = grads.layers[l];
    for (std::size_t r = 0; r < w.rows; ++r) {
      if (dz[r] == 0.0) continue;
      auto grow = g.weights.row(r);
      for (std::size_t c = 0; c < w.cols; ++c) grow[c] += dz[r] * t.input[c];
      g.biases[r] += dz[r];
    }

    const std::size_t needed_from = (l == 0) ? layer.input_size : 0;
    std::vector<double> dx(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      if (dz[r] == 0.0) continue;
      const auto wrow = w.row(r);
      for (std::size_t c = needed_from; c < w.cols; ++c) dx[c] += wrow[c] * dz[r];
    }
    from_above.assign(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(layer.input_size));
    if (recurrent) carry[l].assign(dx.begin() + static_cast<std::ptrdiff_t>(layer.input_size), dx.end());
  }
}

double sample_gradients(const ModelSpec& spec, const Parameters& params, std::span<const Sample> data,
                        std::span<const std::size_t> indices, Parameters& grads) {
  clear(grads);
  if (indices.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(indices.size());
  double loss = 0.0;
  auto state = RnnState::for_spec(spec).prev_activations;
  auto carry = state;
  for (auto i : indices) {
    const auto& s = data[i];
    if (s.label >= spec.outputs()) throw Error(ErrorCode::ShapeMismatch, "label outside the output layer");
    for (auto& v : state) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : carry) std::fill(v.begin(), v.end(), 0.0);
    const auto trace = forward_step(spec, params, s.features, state);
    loss += cross_entropy(trace.back().a, s.label);
    backward_step(spec, params, trace, static_cast<int>(s.label), scale, carry, grads);
  }
  return loss * scale;
}

struct ChunkLoss {
  double loss = 0.0;
  std::size_t targets = 0;
};

ChunkLoss chunk_gradients(const ModelSpec& spec, const Parameters& params, const Sequence& seq,
                          std::size_t begin, std::size_t end, RnnState& state, Parameters& grads) {
  clear(grads);
  if (seq.targets.size() != seq.frames.size()) {
    throw Error(ErrorCode::ShapeMismatch, "sequence needs one target per frame");
  }
  if (begin > end || end > seq.frames.size()) throw Error(ErrorCode::InvalidArgument, "chunk outside the sequence");
  if (state.prev_activations.size() != spec.layers.size()) state = RnnState::for_spec(spec);

  ChunkLoss out;
  std::vector<StepTrace> traces;
  traces.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    traces.push_back(forward_step(spec, params, seq.frames[t], state.prev_activations));
    const int target = seq.targets[t];
    if (target >= 0) {
      if (static_cast<std::size_t>(target) >= spec.outputs()) {
        throw Error(ErrorCode::ShapeMismatch, "target outside the output layer");
      }
      out.loss += cross_entropy(traces.back().back().a, static_cast<std::size_t>(target));
      ++out.targets;
    }
  }
  if (out.targets == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.targets);
  auto carry = RnnState::for_spec(spec).prev_activations;
  for (std::size_t t = end; t-- > begin;) {
    backward_step(spec, params, traces[t - begin], seq.targets[t], scale, carry, grads);
  }
  out.loss *= scale;
  return out;
}

class Updater {
 public:
  explicit Updater(const TrainingConfig& config) : config_(config) {}

  void step(const std::vector<std::span<double>>& values, const std::vector<std::span<const double>>& grads) {
    if (m_.empty()) {
      for (const auto& v : values) {
        m_.emplace_back(v.size(), 0.0);
        v_.emplace_back(v.size(), 0.0);
      }
    }
    ++t_;
    const double lr = config_.learning_rate;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t g = 0; g < values.size(); ++g) {
      auto p = values[g];
      const auto d = grads[g];
      if (config_.optimizer == Optimizer::Sgd) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * d[i];
        continue;
      }
      auto& m = m_[g];
      auto& v = v_[g];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * d[i];
        v[i] = b2 * v[i] + (1.0 - b2) * d[i] * d[i];
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
      }
    }
  }

 private:
  const TrainingConfig& config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

void groups_of(Parameters& p, const Parameters& g, std::vector<std::span<double>>& values,
               std::vector<std::span<const double>>& grads) {
  values.clear();
  grads.clear();
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    values.emplace_back(p.layers[l].weights.data);
    grads.emplace_back(g.layers[l].weights.data);
    values.emplace_back(p.layers[l].biases);
    grads.emplace_back(g.layers[l].biases);
  }
}

void check_finite(double loss, const Parameters& params) {
  bool ok = std::isfinite(loss);
  for (const auto& l : params.layers) {
    for (double w : l.weights.data) ok = ok && std::isfinite(w);
    for (double b : l.biases) ok = ok && std::isfinite(b);
  }
  if (!ok) throw Error(ErrorCode::DivergenceDetected, "training diverged (non-finite loss or parameter)");
}

/// Shuffled minibatch epochs; `step` computes a batch gradient, applies the
/// update and returns the batch loss.
template <typename Step>
std::vector<double> run_epochs(std::size_t samples, const TrainingConfig& config, Step&& step) {
  std::vector<double> history;
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < samples; start += batch) {
      const std::size_t stop = std::min(samples, start + batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      total += step(idx) * static_cast<double>(idx.size());
    }
    const double mean = samples ? total / static_cast<double>(samples) : 0.0;
    history.push_back(mean);
    if (config.on_epoch) config.on_epoch(epoch, mean);
  }
  return history;
}

Parameters shared_params(const QuantizedModel& model) {
  Parameters p;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& q = model.layers[l];
    const auto& mask = model.mask.layers[l];
    Matrix w(q.rows, q.cols);
    std::size_t next = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!mask.pruned[i]) w.data[i] = q.centroids[q.indices[next++]];
    }
    p.layers.push_back({std::move(w), model.biases[l]});
  }
  return p;
}

}  // namespace

void validate(const TrainingConfig& config) {
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error(ErrorCode::InvalidParams, "learning rate must be finite and non-negative");
  }
  if (config.batch_size == 0) throw Error(ErrorCode::InvalidParams, "batch size must be positive");
  if (config.horizon == 0) throw Error(ErrorCode::InvalidParams, "BPTT horizon must be positive");
  if (config.optimizer == Optimizer::Adam &&
      !(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0 &&
        config.epsilon > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "Adam needs beta1, beta2 in [0, 1) and epsilon > 0");
  }
}

double cross_entropy(std::span<const double> probabilities, std::size_t label) {
  constexpr double kFloor = 1e-300;
  return -std::log(std::max(probabilities[label], kFloor));
}

Parameters init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  std::mt19937_64 rng(seed);
  Parameters p = Parameters::zeros(spec);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    const double variance = (layer.activation == Activation::Relu ? 2.0 : 1.0) / static_cast<double>(layer.fan_in());
    std::normal_distribution<double> dist(0.0, std::sqrt(variance));
    for (auto& w : p.layers[l].weights.data) w = dist(rng);
  }
  return p;
}

double compute_gradients(const ModelSpec& spec, const Parameters& params, std::span<const Sample> batch,
                         Parameters& grads) {
  check_trainable(spec, params);
  grads = zeros_like(params);
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  return sample_gradients(spec, params, batch, idx, grads);
}

double compute_gradients_bptt(const ModelSpec& spec, const Parameters& params, const Sequence& seq,
                              std::size_t begin, std::size_t end, RnnState& state, Parameters& grads) {
  check_trainable(spec, params);
  grads = zeros_like(params);
  return chunk_gradients(spec, params, seq, begin, end, state, grads).loss;
}

TrainingResult train_ffnn(const ModelSpec& spec, Parameters params, std::span<const Sample> data,
                          const TrainingConfig& config) {
  if (spec.has_recurrent()) throw Error(ErrorCode::RecurrentLayerPresent, "train_ffnn needs an all-dense model");
  check_trainable(spec, params);
  validate(config);
  Parameters grads = zeros_like(params);
  Updater updater(config);
  std::vector<std::span<double>> values;
  std::vector<std::span<const double>> gspans;
  TrainingResult result;
  result.loss_history = run_epochs(data.size(), config, [&](std::span<const std::size_t> idx) {
    const double loss = sample_gradients(spec, params, data, idx, grads);
    groups_of(params, grads, values, gspans);
    updater.step(values, gspans);
    check_finite(loss, params);
    return loss;
  });
  result.params = std::move(params);
  return result;
}

TrainingResult train_rnn_bptt(const ModelSpec& spec, Parameters params, std::span<const Sequence> data,
                              const TrainingConfig& config) {
  if (!spec.has_recurrent()) throw Error(ErrorCode::InvalidArgument, "BPTT needs a recurrent layer");
  check_trainable(spec, params);
  validate(config);
  Parameters grads = zeros_like(params);
  Updater updater(config);
  std::vector<std::span<double>> values;
  std::vector<std::span<const double>> gspans;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  TrainingResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t targets = 0;
    for (auto s : order) {
      const auto& seq = data[s];
      RnnState state = RnnState::for_spec(spec);
      for (std::size_t begin = 0; begin < seq.frames.size(); begin += config.horizon) {
        const std::size_t end = std::min(seq.frames.size(), begin + config.horizon);
        const auto chunk = chunk_gradients(spec, params, seq, begin, end, state, grads);
        if (chunk.targets == 0) continue;
        groups_of(params, grads, values, gspans);
        updater.step(values, gspans);
        check_finite(chunk.loss, params);
        total += chunk.loss * static_cast<double>(chunk.targets);
        targets += chunk.targets;
      }
    }
    const double mean = targets ? total / static_cast<double>(targets) : 0.0;
    result.loss_history.push_back(mean);
    if (config.on_epoch) config.on_epoch(epoch, mean);
  }
  result.params = std::move(params);
  return result;
}

TrainingResult retrain_pruned(const ModelSpec& spec, Parameters params, const PruneMask& mask,
                              std::span<const Sample> data, const TrainingConfig& config) {
  if (spec.has_recurrent()) throw Error(ErrorCode::RecurrentLayerPresent, "retraining needs an all-dense model");
  check_trainable(spec, params);
  validate(config);
  apply_mask(params, mask);
  Parameters grads = zeros_like(params);
  Updater updater(config);
  std::vector<std::span<double>> values;
  std::vector<std::span<const double>> gspans;
  TrainingResult result;
  result.loss_history = run_epochs(data.size(), config, [&](std::span<const std::size_t> idx) {
    const double loss = sample_gradients(spec, params, data, idx, grads);
    apply_mask(grads, mask);
    groups_of(params, grads, values, gspans);
    updater.step(values, gspans);
    apply_mask(params, mask);
    check_finite(loss, params);
    return loss;
  });
  result.params = std::move(params);
  return result;
}

std::vector<std::vector<double>> centroid_gradients(const QuantizedModel& model, const Parameters& grads) {
  std::vector<std::vector<double>> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& q = model.layers[l];
    const auto& mask = model.mask.layers[l];
    const auto& g = grads.layers.at(l).weights;
    if (g.size() != mask.size()) throw Error(ErrorCode::ShapeMismatch, "gradient shape differs from the mask");
    std::vector<double> cg(q.centroids.size(), 0.0);
    std::size_t next = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask.pruned[i]) cg[q.indices[next++]] += g.data[i];
    }
    out.push_back(std::move(cg));
  }
  return out;
}

QuantizedTrainingResult retrain_quantized(QuantizedModel model, std::span<const Sample> data,
                                          const TrainingConfig& config) {
  const ModelSpec& spec = model.spec;
  if (spec.has_recurrent()) throw Error(ErrorCode::RecurrentLayerPresent, "retraining needs an all-dense model");
  Parameters params = shared_params(model);
  check_trainable(spec, params);
  validate(config);
  Parameters grads = zeros_like(params);
  Updater updater(config);
  std::vector<std::vector<double>> cgrads;
  QuantizedTrainingResult result;
  result.loss_history = run_epochs(data.size(), config, [&](std::span<const std::size_t> idx) {
    const double loss = sample_gradients(spec, params, data, idx, grads);
    cgrads = centroid_gradients(model, grads);
    std::vector<std::span<double>> values;
    std::vector<std::span<const double>> gspans;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      values.emplace_back(model.layers[l].centroids);
      gspans.emplace_back(cgrads[l]);
      values.emplace_back(model.biases[l]);
      gspans.emplace_back(grads.layers[l].biases);
    }
    updater.step(values, gspans);
    params = shared_params(model);
    check_finite(loss, params);
    return loss;
  });
  result.model = std::move(model);
  return result;
}

double accuracy(const ModelSpec& spec, const Parameters& params, std::span<const Sample> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data) {
    if (argmax(run_ffnn(spec, params, s.features)) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<Sample> candidate_samples(std::span<const Image> stream, std::span<const Annotation> annotations,
                                      const DetectorConfig& config, std::size_t tolerance) {
  std::vector<Sample> out;
  for (const auto& lc : label_candidates(stream, annotations, config, tolerance)) {
    out.push_back({candidate_features(scale_candidate(lc.candidate)), index_of(lc.label)});
  }
  return out;
}

std::vector<Sample> clutter_samples(std::size_t count, std::size_t width, std::size_t height,
                                    std::uint64_t seed) {
  std::vector<Sample> out;
  for (const auto& c : clutter_candidates(count, width, height, seed)) {
    out.push_back({candidate_features(c), index_of(GestureClass::NoGesture)});
  }
  return out;
}

Sequence phase_sequence(const AnnotatedSequence& seq, bool with_rolling, double alpha) {
  if (seq.phases.size() != seq.images.size()) {
    throw Error(ErrorCode::InvalidArgument, "recording has no per-frame phase labels");
  }
  Sequence out;
  FrameFeaturizer featurizer(with_rolling, alpha);
  for (std::size_t i = 0; i < seq.images.size(); ++i) {
    out.frames.push_back(featurizer.push(seq.images[i]));
    out.targets.push_back(seq.phases[i]);
  }
  return out;
}

}  // namespace tinyann
