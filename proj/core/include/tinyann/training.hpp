#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tinyann/compression.hpp"
#include "tinyann/model.hpp"
#include "tinyann/pipeline.hpp"
#include "tinyann/synth.hpp"

namespace tinyann {

enum class Optimizer { Sgd, Adam };

struct TrainingConfig {
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Truncated BPTT horizon in frames.
  std::size_t horizon = 32;
  /// Called after every epoch with its index and mean loss.
  std::function<void(std::size_t, double)> on_epoch;
};

/// Throws InvalidParams.
void validate(const TrainingConfig& config);

struct Sample {
  std::vector<double> features;
  std::size_t label = 0;
};

/// Per-frame inputs with a target class per frame, -1 for frames without one.
struct Sequence {
  std::vector<std::vector<double>> frames;
  std::vector<int> targets;
};

struct TrainingResult {
  Parameters params;
  std::vector<double> loss_history;
};

/// Zero-mean normal weights with variance 2/fan_in for Relu layers and
/// 1/fan_in otherwise; zero biases.
Parameters init_params(const ModelSpec& spec, std::uint64_t seed);

/// Mean cross-entropy over `batch` with the gradient of that mean written to
/// `grads` (shaped like `params`). Layer-wise activations are evaluated as
/// exact Softmax. Throws ShapeMismatch or IllegalActivationPlacement when the
/// output layer is not layer-wise.
double compute_gradients(const ModelSpec& spec, const Parameters& params,
                         std::span<const Sample> batch, Parameters& grads);

/// Loss and gradient over frames [begin, end) of `seq`, starting from
/// `state`, which is advanced to the state after frame end - 1. The incoming
/// state is treated as a constant. The loss is the mean over targeted frames.
double compute_gradients_bptt(const ModelSpec& spec, const Parameters& params, const Sequence& seq,
                              std::size_t begin, std::size_t end, RnnState& state, Parameters& grads);

/// Minibatch training of an all-dense model. Throws RecurrentLayerPresent
/// and DivergenceDetected.
TrainingResult train_ffnn(const ModelSpec& spec, Parameters params, std::span<const Sample> data,
                          const TrainingConfig& config);

/// Truncated BPTT: each sequence is processed in chunks of `config.horizon`
/// frames with one update per chunk; the state carries over between chunks.
TrainingResult train_rnn_bptt(const ModelSpec& spec, Parameters params,
                              std::span<const Sequence> data, const TrainingConfig& config);

/// Like train_ffnn, but pruned weights get no updates and stay exactly zero.
TrainingResult retrain_pruned(const ModelSpec& spec, Parameters params, const PruneMask& mask,
                              std::span<const Sample> data, const TrainingConfig& config);

struct QuantizedTrainingResult {
  QuantizedModel model;
  std::vector<double> loss_history;
};

/// Trains the shared centroids (and biases) of a quantized model: the forward
/// pass uses the centroids and each centroid's gradient is the sum of its
/// members' gradients. Cluster assignments never change.
QuantizedTrainingResult retrain_quantized(QuantizedModel model, std::span<const Sample> data,
                                          const TrainingConfig& config);

/// Gradient of each centroid: the summed gradients of its member weights.
std::vector<std::vector<double>> centroid_gradients(const QuantizedModel& model, const Parameters& grads);

/// Fraction of samples whose argmax output equals the label.
double accuracy(const ModelSpec& spec, const Parameters& params, std::span<const Sample> data);

/// One sample per detected candidate: scaled, normalized features labeled
/// as by label_candidates.
std::vector<Sample> candidate_samples(std::span<const Image> stream, std::span<const Annotation> annotations,
                                      const DetectorConfig& config = {}, std::size_t tolerance = 10);

/// NoGesture samples from uniformly random candidates.
std::vector<Sample> clutter_samples(std::size_t count, std::size_t width, std::size_t height,
                                    std::uint64_t seed);

/// Per-frame features (pixels, optionally with rolling statistics) and
/// phase-state targets of a recording with phase labels. Throws
/// InvalidArgument when the recording has none.
Sequence phase_sequence(const AnnotatedSequence& seq, bool with_rolling, double alpha = 0.99);

/// Cross-entropy of a single prediction against a class.
double cross_entropy(std::span<const double> probabilities, std::size_t label);

}  // namespace tinyann
