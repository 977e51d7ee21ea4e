#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tinyann/model.hpp"

namespace tinyann {

/// Counts weight-times-input multiply-accumulates. Attaching one never
/// changes numeric results.
class MacCounter {
 public:
  void add(std::size_t n) noexcept { count_ += n; }
  std::size_t count() const noexcept { return count_; }
  void reset() noexcept { count_ = 0; }

 private:
  std::size_t count_ = 0;
};

enum class ExpMode {
  Exact,
  /// Sigmoid and Tanh use the quadratic power-of-two approximation.
  Approximate,
};

struct ExecOptions {
  ExpMode exp_mode = ExpMode::Exact;
  MacCounter* counter = nullptr;
};

using OutputVector = std::vector<double>;

/// 2^x via 2^floor(x) * (1 + 2/3 v + 1/3 v^2), v = x - floor(x).
/// Throws RangeExceeded for |x| > 126 (outside the float exponent range).
double approx_pow2(double x);

/// e^x computed as approx_pow2(x / ln 2).
double approx_exp(double x);

/// Element-wise activations only; layer-wise kinds throw LayerwiseKind.
double eval_activation(Activation kind, double x, ExpMode mode = ExpMode::Exact);

/// Layer-wise activations (Softmax, ApproxSoftmax, Max). Throws EmptyLayer on
/// an empty input and LayerwiseKind when `kind` is element-wise.
std::vector<double> eval_layer_activation(Activation kind, std::span<const double> pre_activations);

/// Applies either kind of activation to a full layer.
std::vector<double> apply_activation(Activation kind, std::span<const double> pre_activations,
                                     ExpMode mode = ExpMode::Exact);

/// W * inputs + b, summing each row in column order.
std::vector<double> affine(const LayerParams& params, std::span<const double> inputs,
                           MacCounter* counter = nullptr);

std::vector<double> forward_dense(const LayerSpec& layer, const LayerParams& params,
                                  std::span<const double> inputs, const ExecOptions& opts = {});

/// Dense evaluation over [inputs | state]; the result also overwrites `state`.
std::vector<double> step_recurrent(const LayerSpec& layer, const LayerParams& params,
                                   std::span<const double> inputs, std::span<double> state,
                                   const ExecOptions& opts = {});

/// Throws RecurrentLayerPresent if the spec has any recurrent layer.
OutputVector run_ffnn(const ModelSpec& spec, const Parameters& params,
                      std::span<const double> features, const ExecOptions& opts = {});

OutputVector step_rnn(const ModelSpec& spec, const Parameters& params,
                      std::span<const double> features, RnnState& state,
                      const ExecOptions& opts = {});

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace tinyann
