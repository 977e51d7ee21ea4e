#include "tinyann/compression.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "tinyann/error.hpp"

namespace tinyann {

namespace {

constexpr std::size_t kMaxLloydIterations = 300;
constexpr double kLloydTolerance = 1e-9;

void check_mask(const Parameters& params, const PruneMask& mask) {
  if (mask.layers.size() != params.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "mask and parameters have different layer counts");
  }
  for (std::size_t l = 0; l < mask.layers.size(); ++l) {
    const auto& m = mask.layers[l];
    const auto& w = params.layers[l].weights;
    if (m.rows != w.rows || m.cols != w.cols || m.pruned.size() != w.size()) {
      throw Error(ErrorCode::ShapeMismatch, "mask shape differs from layer " + std::to_string(l));
    }
  }
}

std::vector<double> survivors(const Matrix& weights, const LayerMask& mask) {
  std::vector<double> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!mask.pruned[i]) out.push_back(weights.data[i]);
  }
  return out;
}

std::size_t nearest(std::span<const double> centroids, double w) {
  std::size_t best = 0;
  double best_d = std::abs(w - centroids[0]);
  for (std::size_t j = 1; j < centroids.size(); ++j) {
    const double d = std::abs(w - centroids[j]);
    if (d < best_d) {
      best = j;
      best_d = d;
    }
  }
  return best;
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Pruning

std::size_t LayerMask::surviving() const noexcept {
  return static_cast<std::size_t>(std::count(pruned.begin(), pruned.end(), 0));
}

PruneMask PruneMask::none(const Parameters& params) {
  PruneMask mask;
  for (const auto& layer : params.layers) {
    mask.layers.push_back({layer.weights.rows, layer.weights.cols,
                           std::vector<std::uint8_t>(layer.weights.size(), 0)});
  }
  return mask;
}

std::size_t PruneMask::surviving() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.surviving();
  return n;
}

std::size_t PruneMask::total() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

double PruneMask::density() const noexcept {
  const auto t = total();
  return t ? static_cast<double>(surviving()) / static_cast<double>(t) : 1.0;
}

PruneMask prune(const Parameters& params, const PrunePolicy& policy) {
  if (policy.mode == PrunePolicy::Mode::Threshold && !(policy.value >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "pruning threshold must be non-negative");
  }
  if (policy.mode == PrunePolicy::Mode::Density && !(policy.value >= 0.0 && policy.value <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "pruning density must lie in [0, 1]");
  }
  PruneMask mask = PruneMask::none(params);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l].weights.data;
    auto& pruned = mask.layers[l].pruned;
    if (policy.mode == PrunePolicy::Mode::Threshold) {
      for (std::size_t i = 0; i < w.size(); ++i) pruned[i] = std::abs(w[i]) < policy.value;
      continue;
    }
    const auto keep = static_cast<std::size_t>(std::llround(policy.value * static_cast<double>(w.size())));
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
    for (std::size_t i = keep; i < order.size(); ++i) pruned[order[i]] = 1;
  }
  return mask;
}

void apply_mask(Parameters& params, const PruneMask& mask) {
  check_mask(params, mask);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& w = params.layers[l].weights.data;
    const auto& pruned = mask.layers[l].pruned;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (pruned[i]) w[i] = 0.0;
    }
  }
}

// ---------------------------------------------------------------------------
// Weight sharing

std::uint8_t bits_per_index(std::size_t k) noexcept {
  std::uint8_t bits = 0;
  while (k > 1 && (std::size_t{1} << bits) < k) ++bits;
  return bits;
}

QuantizedLayer quantize_kmeans(const Matrix& weights, const LayerMask& mask, std::size_t k,
                               std::uint64_t seed) {
  if (mask.rows != weights.rows || mask.cols != weights.cols || mask.pruned.size() != weights.size()) {
    throw Error(ErrorCode::ShapeMismatch, "mask shape differs from the weights");
  }
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  const auto w = survivors(weights, mask);
  if (k > w.size()) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds " +
                                          std::to_string(w.size()) + " surviving weights");
  }

  QuantizedLayer q;
  q.rows = weights.rows;
  q.cols = weights.cols;
  q.bits = bits_per_index(k);

  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  std::vector<double> c(k);
  for (std::size_t j = 0; j < k; ++j) {
    c[j] = k == 1 ? 0.5 * (*lo + *hi)
                  : *lo + (*hi - *lo) * static_cast<double>(j) / static_cast<double>(k - 1);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> assign(w.size());
  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    for (std::size_t i = 0; i < w.size(); ++i) assign[i] = nearest(c, w[i]);

    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      sum[assign[i]] += w[i];
      ++count[assign[i]];
    }
    std::vector<double> next(k);
    for (std::size_t j = 0; j < k; ++j) next[j] = count[j] ? sum[j] / static_cast<double>(count[j]) : c[j];

    double sse = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) sse += (w[i] - next[assign[i]]) * (w[i] - next[assign[i]]);
    q.sse_history.push_back(sse);

    // An empty cluster moves to a weight drawn with probability proportional
    // to its squared distance from its centroid.
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j]) continue;
      std::vector<double> d2(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) d2[i] = (w[i] - next[assign[i]]) * (w[i] - next[assign[i]]);
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      if (total <= 0.0) continue;
      std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
      next[j] = w[pick(rng)];
    }

    double movement = 0.0;
    for (std::size_t j = 0; j < k; ++j) movement = std::max(movement, std::abs(next[j] - c[j]));
    c = std::move(next);
    if (movement < kLloydTolerance) break;
  }

  q.centroids.resize(k);
  std::transform(c.begin(), c.end(), q.centroids.begin(), round_to_float);
  q.indices.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) q.indices[i] = static_cast<std::uint32_t>(nearest(q.centroids, w[i]));
  return q;
}

Matrix reconstruct(const QuantizedLayer& layer, const LayerMask& mask) {
  if (mask.rows != layer.rows || mask.cols != layer.cols || mask.surviving() != layer.indices.size()) {
    throw Error(ErrorCode::ShapeMismatch, "mask does not match the quantized layer");
  }
  Matrix m(layer.rows, layer.cols);
  std::size_t next = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (mask.pruned[i]) continue;
    const auto idx = layer.indices[next++];
    if (idx >= layer.centroids.size()) throw Error(ErrorCode::CorruptStream, "cluster index out of range");
    m.data[i] = layer.centroids[idx];
  }
  return m;
}

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, std::uint8_t bits) {
  std::vector<std::uint8_t> out((indices.size() * bits + 7) / 8, 0);
  std::size_t pos = 0;
  for (auto idx : indices) {
    for (std::uint8_t b = 0; b < bits; ++b, ++pos) {
      if ((idx >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count,
                                          std::uint8_t bits) {
  if (bytes.size() * 8 < count * bits) throw Error(ErrorCode::Truncated, "packed index stream too short");
  std::vector<std::uint32_t> out(count, 0);
  std::size_t pos = 0;
  for (auto& idx : out) {
    for (std::uint8_t b = 0; b < bits; ++b, ++pos) {
      if ((bytes[pos / 8] >> (pos % 8)) & 1u) idx |= 1u << b;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse format

SparseLayer encode_sparse(const Matrix& m, bool allow_filler) {
  SparseLayer sl;
  std::ptrdiff_t prev = -1;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.data[i] == 0.0) continue;
    auto gap = static_cast<std::ptrdiff_t>(i) - prev;
    if (gap > kMaxDelta && !allow_filler) {
      throw Error(ErrorCode::DeltaOverflow, "gap of " + std::to_string(gap) + " exceeds the delta field");
    }
    while (gap > kMaxDelta) {
      sl.values.push_back(0.0);
      sl.deltas.push_back(kMaxDelta);
      gap -= kMaxDelta;
    }
    sl.values.push_back(m.data[i]);
    sl.deltas.push_back(static_cast<std::uint8_t>(gap));
    prev = static_cast<std::ptrdiff_t>(i);
  }
  return sl;
}

Matrix decode_sparse(const SparseLayer& sl, std::size_t rows, std::size_t cols) {
  if (sl.values.size() != sl.deltas.size()) {
    throw Error(ErrorCode::ShapeMismatch, "sparse layer has unequal value and delta counts");
  }
  Matrix m(rows, cols);
  std::size_t pos = 0;
  bool first = true;
  for (std::size_t e = 0; e < sl.values.size(); ++e) {
    if (sl.deltas[e] == 0) throw Error(ErrorCode::CorruptStream, "zero delta in sparse layer");
    pos = first ? sl.deltas[e] - 1 : pos + sl.deltas[e];
    first = false;
    if (SparseLayer::is_filler(sl.values[e], sl.deltas[e])) {
      if (pos > m.size()) throw Error(ErrorCode::DeltaOverflow, "sparse deltas run past the matrix");
      continue;
    }
    if (pos >= m.size()) throw Error(ErrorCode::DeltaOverflow, "sparse deltas run past the matrix");
    m.data[pos] = sl.values[e];
  }
  return m;
}

std::vector<double> sparse_matvec(const SparseLayer& sl, std::size_t rows, std::size_t cols,
                                  std::span<const double> input, MacCounter* counter) {
  if (input.size() != cols || sl.values.size() != sl.deltas.size()) {
    throw Error(ErrorCode::ShapeMismatch, "sparse matvec input does not match the layer");
  }
  std::vector<double> out(rows, 0.0);
  std::size_t pos = 0;
  std::size_t multiplies = 0;
  bool first = true;
  for (std::size_t e = 0; e < sl.values.size(); ++e) {
    pos = first ? std::size_t{sl.deltas[e]} - 1 : pos + sl.deltas[e];
    first = false;
    if (SparseLayer::is_filler(sl.values[e], sl.deltas[e])) continue;
    if (pos >= rows * cols) throw Error(ErrorCode::DeltaOverflow, "sparse deltas run past the matrix");
    out[pos / cols] += sl.values[e] * input[pos % cols];
    ++multiplies;
  }
  if (counter) counter->add(multiplies);
  return out;
}

// ---------------------------------------------------------------------------
// Whole-model compression

QuantizedModel quantize_model(const ModelSpec& spec, const Parameters& params,
                              const PruneMask& mask, const CompressionOptions& options) {
  validate(spec, params);
  check_mask(params, mask);
  if (!options.k_per_layer.empty() && options.k_per_layer.size() != params.layers.size()) {
    throw Error(ErrorCode::InvalidArgument, "k_per_layer needs one entry per layer");
  }
  QuantizedModel q;
  q.spec = spec;
  q.mask = mask;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const std::size_t n = mask.layers[l].surviving();
    std::size_t k = options.k_per_layer.empty() ? options.k : options.k_per_layer[l];
    if (k == 0 || k > n) k = n;
    if (n == 0) {
      QuantizedLayer empty;
      empty.rows = layer.weights.rows;
      empty.cols = layer.weights.cols;
      q.layers.push_back(std::move(empty));
    } else {
      q.layers.push_back(quantize_kmeans(layer.weights, mask.layers[l], k, options.seed + l));
    }
    q.biases.push_back(layer.biases);
  }
  return q;
}

Parameters reconstruct(const QuantizedModel& model) {
  Parameters p;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    QuantizedLayer rounded = model.layers[l];
    std::transform(rounded.centroids.begin(), rounded.centroids.end(), rounded.centroids.begin(), round_to_float);
    LayerParams lp{reconstruct(rounded, model.mask.layers[l]), model.biases[l]};
    std::transform(lp.biases.begin(), lp.biases.end(), lp.biases.begin(), round_to_float);
    p.layers.push_back(std::move(lp));
  }
  return p;
}

std::vector<std::uint8_t> CompressedModel::weight_stream() const {
  std::vector<std::uint8_t> out;
  for (const auto& l : layers) {
    for (float c : l.centroids) put_f32(out, c);
    out.insert(out.end(), l.indices.begin(), l.indices.end());
    out.insert(out.end(), l.deltas.begin(), l.deltas.end());
  }
  return out;
}

SizeReport CompressedModel::sizes() const {
  SizeReport r;
  std::size_t bias_bytes = 0;
  std::size_t stream = 0;
  std::size_t deltas = 0;
  for (const auto& l : layers) {
    r.weights += l.rows * l.cols;
    r.surviving += l.surviving;
    r.parameters += l.rows * l.cols + l.biases.size();
    bias_bytes += 4 * l.biases.size();
    deltas += l.deltas.size();
    stream += 4 * l.centroids.size() + l.indices.size() + l.deltas.size();
  }
  r.naive_bytes = 4 * r.parameters;
  r.pruned_bytes = 4 * r.surviving + deltas + bias_bytes;
  r.quantized_bytes = stream + bias_bytes;
  r.huffman_bytes = huffman ? coded.stored_size() + bias_bytes : 0;
  r.payload_bytes = huffman ? r.huffman_bytes : r.quantized_bytes;
  return r;
}

CompressedModel encode_model(const QuantizedModel& model, bool huffman) {
  if (model.layers.size() != model.spec.layers.size() || model.biases.size() != model.layers.size() ||
      model.mask.layers.size() != model.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "quantized model layers do not match its spec");
  }
  CompressedModel out;
  out.spec = model.spec;
  out.huffman = huffman;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& q = model.layers[l];
    const auto& mask = model.mask.layers[l];
    if (mask.surviving() != q.indices.size()) {
      throw Error(ErrorCode::ShapeMismatch, "mask does not match the quantized layer");
    }
    CompressedLayer cl;
    cl.rows = q.rows;
    cl.cols = q.cols;
    cl.bits = q.bits;
    cl.surviving = q.indices.size();
    for (double c : q.centroids) cl.centroids.push_back(static_cast<float>(c));
    cl.indices = pack_indices(q.indices, q.bits);
    std::ptrdiff_t prev = -1;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask.pruned[i]) continue;
      auto gap = static_cast<std::ptrdiff_t>(i) - prev;
      for (; gap > kMaxDelta; gap -= kMaxDelta) cl.deltas.push_back(0);
      cl.deltas.push_back(static_cast<std::uint8_t>(gap));
      prev = static_cast<std::ptrdiff_t>(i);
    }
    for (double b : model.biases[l]) cl.biases.push_back(static_cast<float>(b));
    out.layers.push_back(std::move(cl));
  }
  if (huffman) out.coded = huffman_encode(out.weight_stream());
  return out;
}

CompressedModel compress_model(const ModelSpec& spec, const Parameters& params,
                               const CompressionOptions& options) {
  const PruneMask mask = prune(params, PrunePolicy::density(options.density));
  Parameters pruned = params;
  apply_mask(pruned, mask);
  return encode_model(quantize_model(spec, pruned, mask, options), options.huffman);
}

QuantizedModel decode_model(const CompressedModel& model) {
  if (model.layers.size() != model.spec.layers.size()) {
    throw Error(ErrorCode::CorruptStream, "layer count differs from the spec");
  }
  if (model.huffman && huffman_decode(model.coded) != model.weight_stream()) {
    throw Error(ErrorCode::CorruptStream, "Huffman stream does not match the stored layers");
  }
  QuantizedModel q;
  q.spec = model.spec;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& cl = model.layers[l];
    const auto& spec = model.spec.layers[l];
    if (cl.rows != spec.neurons || cl.cols != spec.fan_in() || cl.biases.size() != spec.neurons) {
      throw Error(ErrorCode::CorruptStream, "layer " + std::to_string(l) + " shape differs from the spec");
    }
    if (cl.bits != bits_per_index(cl.centroids.size())) {
      throw Error(ErrorCode::CorruptStream, "index width does not match the centroid count");
    }
    LayerMask mask{cl.rows, cl.cols, std::vector<std::uint8_t>(cl.rows * cl.cols, 1)};
    std::size_t pos = 0;
    std::size_t found = 0;
    bool first = true;
    for (auto d : cl.deltas) {
      const std::size_t step = d == 0 ? kMaxDelta : d;
      pos = first ? step - 1 : pos + step;
      first = false;
      if (d == 0) continue;
      if (pos >= mask.size()) throw Error(ErrorCode::CorruptStream, "delta stream runs past the layer");
      mask.pruned[pos] = 0;
      ++found;
    }
    if (found != cl.surviving) throw Error(ErrorCode::CorruptStream, "delta stream and weight count disagree");
    QuantizedLayer ql;
    ql.rows = cl.rows;
    ql.cols = cl.cols;
    ql.bits = cl.bits;
    ql.centroids.assign(cl.centroids.begin(), cl.centroids.end());
    ql.indices = unpack_indices(cl.indices, cl.surviving, cl.bits);
    for (auto idx : ql.indices) {
      if (idx >= ql.centroids.size()) throw Error(ErrorCode::CorruptStream, "cluster index out of range");
    }
    q.mask.layers.push_back(std::move(mask));
    q.layers.push_back(std::move(ql));
    q.biases.emplace_back(cl.biases.begin(), cl.biases.end());
  }
  return q;
}

Parameters decompress(const CompressedModel& model) { return reconstruct(decode_model(model)); }

OutputVector run_compressed(const CompressedModel& model, std::span<const double> features,
                            const ExecOptions& opts) {
  if (model.spec.has_recurrent()) {
    throw Error(ErrorCode::RecurrentLayerPresent, "compressed execution needs an all-dense model");
  }
  if (features.size() != model.spec.features) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(model.spec.features) + " features");
  }
  if (model.layers.size() != model.spec.layers.size()) {
    throw Error(ErrorCode::CorruptStream, "layer count differs from the spec");
  }
  std::vector<double> x(features.begin(), features.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& cl = model.layers[l];
    const std::size_t size = cl.rows * cl.cols;
    if (cl.cols != x.size() || cl.biases.size() != cl.rows) {
      throw Error(ErrorCode::CorruptStream, "layer " + std::to_string(l) + " shape differs from its input");
    }
    if (cl.bits > 32) throw Error(ErrorCode::CorruptStream, "index width above 32 bits");
    if ((cl.surviving * cl.bits + 7) / 8 > cl.indices.size()) {
      throw Error(ErrorCode::CorruptStream, "index stream too short");
    }
    std::vector<double> z(cl.biases.begin(), cl.biases.end());
    const std::uint8_t* packed = cl.indices.data();
    const std::size_t packed_size = cl.indices.size();
    const std::size_t bits = cl.bits;
    const std::size_t cols = cl.cols;
    const std::size_t n_centroids = cl.centroids.size();
    const std::uint64_t index_mask = bits ? (std::uint64_t{1} << bits) - 1u : 0u;
    std::size_t bit = 0;
    std::size_t next = 0;
    std::size_t pos = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t step = 0;
    double acc = z.empty() ? 0.0 : z[0];
    bool started = false;
    for (std::uint8_t d : cl.deltas) {
      if (d == 0) {
        step += kMaxDelta;
        continue;
      }
      step += started ? d : d - 1u;
      started = true;
      pos += step;
      if (pos >= size || next >= cl.surviving) throw Error(ErrorCode::CorruptStream, "delta stream runs past the layer");
      for (col += step; col >= cols; col -= cols) {
        z[row++] = acc;
        acc = z[row];
      }
      step = 0;
      std::uint64_t window = 0;
      const std::size_t byte = bit / 8;
      if (std::endian::native == std::endian::little && byte + 8 <= packed_size) {
        std::memcpy(&window, packed + byte, 8);
      } else {
        for (std::size_t i = byte; i < packed_size; ++i) window |= std::uint64_t{packed[i]} << (8 * (i - byte));
      }
      const auto idx = static_cast<std::size_t>((window >> (bit % 8)) & index_mask);
      bit += bits;
      if (idx >= n_centroids) throw Error(ErrorCode::CorruptStream, "index outside the centroid table");
      acc += static_cast<double>(cl.centroids[idx]) * x[col];
      ++next;
    }
    if (started) z[row] = acc;
    if (next != cl.surviving) throw Error(ErrorCode::CorruptStream, "delta stream ends early");
    if (opts.counter) opts.counter->add(next);
    x = apply_activation(model.spec.layers[l].activation, z, opts.exp_mode);
  }
  return x;
}

}  // namespace tinyann
