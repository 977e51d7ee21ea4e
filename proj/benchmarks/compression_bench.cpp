#include <benchmark/benchmark.h>

#include <random>

#include "tinyann/compression.hpp"
#include "tinyann/training.hpp"

using namespace tinyann;

namespace {

const ModelSpec& demo_spec() {
  static const ModelSpec spec = parse_architecture("180-7relu-14relu-13softmax");
  return spec;
}

CompressionOptions demo_options(bool huffman) {
  CompressionOptions opts;
  opts.density = 0.32;
  opts.k = 15;
  opts.huffman = huffman;
  return opts;
}

void BM_CompressDemo(benchmark::State& state) {
  const auto params = init_params(demo_spec(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(compress_model(demo_spec(), params, demo_options(state.range(0) != 0)));
}
BENCHMARK(BM_CompressDemo)->Arg(0)->Arg(1);

void BM_DenseDemo(benchmark::State& state) {
  const auto params = decompress(compress_model(demo_spec(), init_params(demo_spec(), 1), demo_options(false)));
  const std::vector<double> x(180, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(run_ffnn(demo_spec(), params, x));
}
BENCHMARK(BM_DenseDemo);

void BM_SparseDemo(benchmark::State& state) {
  const auto model = compress_model(demo_spec(), init_params(demo_spec(), 1), demo_options(false));
  const std::vector<double> x(180, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(run_compressed(model, x));
}
BENCHMARK(BM_SparseDemo);

void BM_HuffmanRoundTrip(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::geometric_distribution<int> g(0.3);
  std::vector<std::uint8_t> data(4096);
  for (auto& b : data) b = static_cast<std::uint8_t>(g(rng));
  for (auto _ : state) benchmark::DoNotOptimize(huffman_decode(huffman_encode(data)));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_HuffmanRoundTrip);

void BM_Kmeans(benchmark::State& state) {
  const auto params = init_params(demo_spec(), 2);
  const auto mask = prune(params, PrunePolicy::density(0.32));
  for (auto _ : state) {
    benchmark::DoNotOptimize(quantize_kmeans(params.layers[0].weights, mask.layers[0], 15, 3));
  }
}
BENCHMARK(BM_Kmeans);

}  // namespace
