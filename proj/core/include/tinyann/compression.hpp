#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tinyann/inference.hpp"
#include "tinyann/model.hpp"

namespace tinyann {

// ---------------------------------------------------------------------------
// Pruning

struct LayerMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// 1 = pruned (weight fixed at zero), row-major like the weights.
  std::vector<std::uint8_t> pruned;

  bool is_pruned(std::size_t r, std::size_t c) const { return pruned[r * cols + c] != 0; }
  std::size_t surviving() const noexcept;
  std::size_t size() const noexcept { return pruned.size(); }

  bool operator==(const LayerMask&) const = default;
};

struct PruneMask {
  std::vector<LayerMask> layers;

  /// A mask that prunes nothing.
  static PruneMask none(const Parameters& params);

  std::size_t surviving() const noexcept;
  std::size_t total() const noexcept;
  double density() const noexcept;

  bool operator==(const PruneMask&) const = default;
};

struct PrunePolicy {
  enum class Mode { Threshold, Density };
  Mode mode = Mode::Density;
  /// Magnitude threshold or surviving fraction per layer.
  double value = 1.0;

  static PrunePolicy threshold(double tau) { return {Mode::Threshold, tau}; }
  static PrunePolicy density(double d) { return {Mode::Density, d}; }
};

/// Threshold mode prunes |w| < tau. Density mode keeps the round(d * n)
/// largest magnitudes of each layer (ties keep the earlier weight).
/// Biases are never pruned. Throws InvalidArgument for a bad policy value.
PruneMask prune(const Parameters& params, const PrunePolicy& policy);

/// Zeroes every pruned weight. Throws ShapeMismatch.
void apply_mask(Parameters& params, const PruneMask& mask);

// ---------------------------------------------------------------------------
// Weight sharing

/// ceil(log2 k); 0 for k <= 1.
std::uint8_t bits_per_index(std::size_t k) noexcept;

struct QuantizedLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> centroids;
  /// Cluster of each surviving weight, in row-major order of the survivors.
  std::vector<std::uint32_t> indices;
  std::uint8_t bits = 0;
  /// Sum of squared distances to the assigned centroids after each
  /// Lloyd iteration.
  std::vector<double> sse_history;

  bool operator==(const QuantizedLayer&) const = default;
};

/// Lloyd's algorithm on the surviving weights, from centroids spaced evenly
/// over [min, max], until no centroid moves by 1e-9 or 300 iterations.
/// Centroids are rounded to float precision at the end. Empty clusters are
/// reseeded from the seed. Throws KTooLarge when k exceeds the surviving
/// weights and InvalidArgument for k == 0.
QuantizedLayer quantize_kmeans(const Matrix& weights, const LayerMask& mask, std::size_t k,
                               std::uint64_t seed = 0);

/// Dense matrix with every surviving weight replaced by its centroid.
Matrix reconstruct(const QuantizedLayer& layer, const LayerMask& mask);

/// Packs indices LSB-first, `bits` per index.
std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, std::uint8_t bits);
/// Throws Truncated when `bytes` is too short for `count` indices.
std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count,
                                          std::uint8_t bits);

// ---------------------------------------------------------------------------
// Sparse address-map format

inline constexpr std::uint8_t kMaxDelta = 255;

/// Non-zero weights with the row-major distance to the previous one (the
/// first is measured from -1). Gaps above 255 are bridged by filler entries
/// (value 0, delta 255).
struct SparseLayer {
  std::vector<double> values;
  std::vector<std::uint8_t> deltas;

  static bool is_filler(double value, std::uint8_t delta) noexcept {
    return value == 0.0 && delta == kMaxDelta;
  }

  bool operator==(const SparseLayer&) const = default;
};

/// With `allow_filler` false a gap above 255 throws DeltaOverflow.
SparseLayer encode_sparse(const Matrix& m, bool allow_filler = true);

/// Throws ShapeMismatch on unequal value/delta counts and DeltaOverflow when
/// the deltas run past the matrix.
Matrix decode_sparse(const SparseLayer& sl, std::size_t rows, std::size_t cols);

/// W * x over the stored weights only; counts one multiply per non-filler
/// entry. Throws ShapeMismatch.
std::vector<double> sparse_matvec(const SparseLayer& sl, std::size_t rows, std::size_t cols,
                                  std::span<const double> input, MacCounter* counter = nullptr);

// ---------------------------------------------------------------------------
// Huffman coding

struct HuffmanEncoded {
  /// (symbol, code length) for every symbol present, in symbol order.
  std::vector<std::pair<std::uint8_t, std::uint8_t>> table;
  std::uint64_t symbol_count = 0;
  std::uint64_t bit_count = 0;
  /// Codes packed MSB-first.
  std::vector<std::uint8_t> bits;

  /// Bytes taken by the table, symbol and bit counts and bitstream when stored.
  std::size_t stored_size() const noexcept;

  bool operator==(const HuffmanEncoded&) const = default;
};

/// Canonical Huffman coding; a single distinct symbol gets a 1-bit code.
HuffmanEncoded huffman_encode(std::span<const std::uint8_t> data);
/// Throws CorruptStream on an invalid table or bitstream.
std::vector<std::uint8_t> huffman_decode(const HuffmanEncoded& encoded);

// ---------------------------------------------------------------------------
// Whole-model compression

/// Pruned and weight-shared parameters before byte encoding.
struct QuantizedModel {
  ModelSpec spec;
  PruneMask mask;
  std::vector<QuantizedLayer> layers;
  std::vector<std::vector<double>> biases;

  bool operator==(const QuantizedModel&) const = default;
};

struct CompressionOptions {
  /// Surviving fraction per layer.
  double density = 1.0;
  /// Clusters per layer; 0 means one cluster per surviving weight. Layers
  /// with fewer survivors use one cluster per survivor.
  std::size_t k = 15;
  /// Optional per-layer override of k.
  std::vector<std::size_t> k_per_layer;
  bool huffman = false;
  std::uint64_t seed = 0;
};

/// Quantizes already pruned `params` under `mask`.
QuantizedModel quantize_model(const ModelSpec& spec, const Parameters& params,
                              const PruneMask& mask, const CompressionOptions& options);

/// Dense parameters as deployed: centroids and biases at float precision.
Parameters reconstruct(const QuantizedModel& model);

/// One layer as stored: float centroids, packed indices and 8-bit deltas in
/// which 0 means "advance 255 positions without a weight".
struct CompressedLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint8_t bits = 0;
  std::vector<float> centroids;
  std::size_t surviving = 0;
  std::vector<std::uint8_t> indices;
  std::vector<std::uint8_t> deltas;
  std::vector<float> biases;

  bool operator==(const CompressedLayer&) const = default;
};

struct SizeReport {
  std::size_t weights = 0;
  std::size_t surviving = 0;
  std::size_t parameters = 0;
  /// Every parameter as a 32-bit float.
  std::size_t naive_bytes = 0;
  /// Surviving weights as floats plus deltas and biases.
  std::size_t pruned_bytes = 0;
  /// Centroid tables, packed indices, deltas and biases.
  std::size_t quantized_bytes = 0;
  /// As above with the weight stream Huffman coded; 0 when disabled.
  std::size_t huffman_bytes = 0;
  /// What the stored model actually needs.
  std::size_t payload_bytes = 0;

  double ratio() const noexcept {
    return payload_bytes ? static_cast<double>(naive_bytes) / static_cast<double>(payload_bytes) : 0.0;
  }
};

struct CompressedModel {
  ModelSpec spec;
  std::vector<CompressedLayer> layers;
  bool huffman = false;
  /// Huffman coding of weight_stream(), present when `huffman` is set.
  HuffmanEncoded coded;

  /// Centroid tables, packed indices and deltas of all layers, in order.
  std::vector<std::uint8_t> weight_stream() const;
  SizeReport sizes() const;

  bool operator==(const CompressedModel&) const = default;
};

CompressedModel encode_model(const QuantizedModel& model, bool huffman);

/// Prune, quantize and encode without retraining.
CompressedModel compress_model(const ModelSpec& spec, const Parameters& params,
                               const CompressionOptions& options);

/// Rebuilds the stored centroids, masks and indices. Throws CorruptStream.
QuantizedModel decode_model(const CompressedModel& model);
Parameters decompress(const CompressedModel& model);

/// Runs an all-dense compressed model directly from its sparse storage,
/// one multiply per surviving weight. Results equal run_ffnn over
/// decompress(model).
OutputVector run_compressed(const CompressedModel& model, std::span<const double> features,
                            const ExecOptions& opts = {});

}  // namespace tinyann
