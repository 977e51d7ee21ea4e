#include "tinyann/estimator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>

#include "tinyann/error.hpp"

namespace tinyann {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    throw Error(ErrorCode::ParseError, "bad value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

/// Calls `apply(key, value)` for every "key = value" line.
void for_each_entry(std::string_view text,
                    const std::function<void(std::string_view, std::string_view, std::size_t)>& apply) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
}

}  // namespace

std::size_t count_weights(const ModelSpec& spec) noexcept {
  std::size_t n = 0;
  for (const auto& l : spec.layers) n += l.weight_count();
  return n;
}

std::size_t count_neurons(const ModelSpec& spec) noexcept {
  std::size_t n = 0;
  for (const auto& l : spec.layers) n += l.neurons;
  return n;
}

std::size_t count_parameters(const ModelSpec& spec) noexcept { return count_weights(spec) + count_neurons(spec); }

std::size_t layer_ram_variables(const LayerSpec& layer) noexcept {
  const bool wide = layer.activation == Activation::Softmax || layer.activation == Activation::Max ||
                    layer.activation == Activation::ApproxSoftmax;
  if (layer.kind == LayerKind::Recurrent) {
    const std::size_t base = 2 * layer.neurons + layer.input_size;
    return wide ? std::max(base, 3 * layer.neurons) : base;
  }
  const std::size_t base = layer.neurons + layer.input_size;
  return wide ? std::max(base, 2 * layer.neurons) : base;
}

RamUsage count_ram_variables(const ModelSpec& spec) noexcept {
  RamUsage usage;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto v = layer_ram_variables(spec.layers[l]);
    if (v > usage.variables) {
      usage.variables = v;
      usage.limiting_layer = l;
    }
  }
  return usage;
}

ExecTime estimate_exec_time(const ModelSpec& spec, const CostModel& cost) {
  return estimate_compressed_exec_time(spec, count_weights(spec), cost);
}

ExecTime estimate_compressed_exec_time(const ModelSpec& spec, std::size_t surviving_weights,
                                       const CostModel& cost) {
  ExecTime t;
  t.mac_us = static_cast<double>(surviving_weights) * cost.mac;
  for (const auto& layer : spec.layers) {
    const auto unit = cost.cost(layer.activation);
    if (!unit) {
      throw Error(ErrorCode::UnknownActivationCost,
                  "no cost configured for " + std::string(to_string(layer.activation)));
    }
    t.activation_us += static_cast<double>(layer.neurons) * *unit;
  }
  return t;
}

ResourceReport check_fit(const ModelSpec& spec, const Budget& budget, const CostModel& cost) {
  ResourceReport r;
  r.weights = count_weights(spec);
  r.neurons = count_neurons(spec);
  r.parameters = r.weights + r.neurons;
  r.activation_calls = r.neurons;
  const auto ram = count_ram_variables(spec);
  r.ram_variables = ram.variables;
  r.limiting_layer = ram.limiting_layer;
  r.ram_bytes = r.ram_variables * budget.bytes_per_variable;
  r.ram_limit_bytes = static_cast<std::size_t>(std::floor(budget.ram_fraction_for_layers * static_cast<double>(budget.ram_bytes)));
  r.flash_bytes = r.parameters * budget.bytes_per_parameter;
  r.flash_limit_bytes = budget.flash_bytes;
  r.max_parameters = budget.bytes_per_parameter ? budget.flash_bytes / budget.bytes_per_parameter : 0;
  r.fits_flash = budget.flash_bytes > 0 && r.flash_bytes <= budget.flash_bytes;
  r.fits_ram = r.ram_limit_bytes > 0 && r.ram_bytes <= r.ram_limit_bytes;
  r.exec_time = estimate_exec_time(spec, cost);
  return r;
}

CostModel parse_cost_model(std::string_view text, CostModel base) {
  for_each_entry(text, [&](std::string_view key, std::string_view value, std::size_t line) {
    const double v = parse_number(key, value);
    if (!(v > 0.0)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": costs must be positive");
    }
    if (key == "mac") {
      base.mac = v;
    } else if (key == "approx_exp" || key == "approxexp") {
      base.approx_exp = v;
    } else if (const auto a = activation_from_string(key)) {
      base.set(*a, v);
    } else {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unknown cost key '" +
                                             std::string(key) + "'");
    }
  });
  return base;
}

Budget parse_budget(std::string_view text, Budget base) {
  for_each_entry(text, [&](std::string_view key, std::string_view value, std::size_t line) {
    const double v = parse_number(key, value);
    if (!(v >= 0.0)) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": negative budget");
    auto whole = [&] {
      if (v != std::floor(v)) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + std::string(key) +
                                               " must be an integer");
      }
      return static_cast<std::size_t>(v);
    };
    if (key == "flash_bytes") base.flash_bytes = whole();
    else if (key == "ram_bytes") base.ram_bytes = whole();
    else if (key == "bytes_per_parameter") base.bytes_per_parameter = whole();
    else if (key == "bytes_per_variable") base.bytes_per_variable = whole();
    else if (key == "ram_fraction_for_layers") base.ram_fraction_for_layers = v;
    else {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unknown budget key '" +
                                             std::string(key) + "'");
    }
  });
  return base;
}

}  // namespace tinyann
