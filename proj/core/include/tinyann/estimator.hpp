#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "tinyann/model.hpp"

namespace tinyann {

/// Execution-time constants of the target, in microseconds.
struct CostModel {
  double mac = 18.0;
  /// Per neuron, indexed by Activation.
  std::array<std::optional<double>, 8> activation = {170.0, 170.0, 15.0, 41.0, 5.0, 170.0, 83.0, 5.0};
  /// One evaluation of the approximated exponential function.
  double approx_exp = 75.0;

  std::optional<double> cost(Activation a) const { return activation[static_cast<std::size_t>(a)]; }
  void set(Activation a, double us) { activation[static_cast<std::size_t>(a)] = us; }
};

struct Budget {
  std::size_t flash_bytes = 32768;
  std::size_t ram_bytes = 2048;
  std::size_t bytes_per_parameter = 4;
  double ram_fraction_for_layers = 0.5;
  std::size_t bytes_per_variable = 4;
};

struct ExecTime {
  double mac_us = 0.0;
  double activation_us = 0.0;
  double total_us() const noexcept { return mac_us + activation_us; }
};

struct RamUsage {
  std::size_t variables = 0;
  /// Layer that needs the most variables.
  std::size_t limiting_layer = 0;
};

struct ResourceReport {
  std::size_t weights = 0;
  std::size_t parameters = 0;
  std::size_t neurons = 0;
  std::size_t activation_calls = 0;
  std::size_t ram_variables = 0;
  std::size_t limiting_layer = 0;
  std::size_t ram_bytes = 0;
  std::size_t ram_limit_bytes = 0;
  std::size_t flash_bytes = 0;
  std::size_t flash_limit_bytes = 0;
  /// Largest parameter count the flash can hold.
  std::size_t max_parameters = 0;
  ExecTime exec_time;
  bool fits_flash = false;
  bool fits_ram = false;

  bool fits() const noexcept { return fits_flash && fits_ram; }
};

std::size_t count_weights(const ModelSpec& spec) noexcept;
std::size_t count_neurons(const ModelSpec& spec) noexcept;
std::size_t count_parameters(const ModelSpec& spec) noexcept;

/// Variables a layer needs at once: its outputs plus its inputs (and its
/// previous outputs when recurrent), or all pre- and post-activations for
/// Softmax-type layers when that is more. The model needs the maximum.
std::size_t layer_ram_variables(const LayerSpec& layer) noexcept;
RamUsage count_ram_variables(const ModelSpec& spec) noexcept;

/// MACs times the MAC cost plus each layer's neurons times its activation
/// cost. Throws UnknownActivationCost.
ExecTime estimate_exec_time(const ModelSpec& spec, const CostModel& cost = {});

/// Execution time when only `surviving_weights` multiplications remain.
ExecTime estimate_compressed_exec_time(const ModelSpec& spec, std::size_t surviving_weights,
                                       const CostModel& cost = {});

ResourceReport check_fit(const ModelSpec& spec, const Budget& budget = {}, const CostModel& cost = {});

/// Reads "key = value" lines; '#' starts a comment. Keys: mac, approx_exp
/// and activation names (sigmoid, tanh, ..., approxsoftmax). Throws
/// ParseError on unknown keys or bad values.
CostModel parse_cost_model(std::string_view text, CostModel base = {});
/// Keys: flash_bytes, ram_bytes, bytes_per_parameter, ram_fraction_for_layers,
/// bytes_per_variable.
Budget parse_budget(std::string_view text, Budget base = {});

}  // namespace tinyann
