#include <gtest/gtest.h>

#include <random>

#include "tinyann/compression.hpp"
#include "tinyann/error.hpp"

using namespace tinyann;

TEST(Huffman, SingleSymbolUsesOneBit) {
  const std::vector<std::uint8_t> data(100, 7);
  const auto enc = huffman_encode(data);
  ASSERT_EQ(enc.table.size(), 1u);
  EXPECT_EQ(enc.table[0], (std::pair<std::uint8_t, std::uint8_t>{7, 1}));
  EXPECT_EQ(enc.bit_count, 100u);
  EXPECT_EQ(huffman_decode(enc), data);
}

TEST(Huffman, SkewedInputShrinks) {
  std::mt19937_64 rng(4);
  std::vector<std::uint8_t> data(10000);
  for (auto& b : data) {
    b = std::bernoulli_distribution(0.9)(rng) ? 0 : static_cast<std::uint8_t>(1 + rng() % 9);
  }
  const auto enc = huffman_encode(data);
  EXPECT_LT(static_cast<double>(enc.stored_size()), 0.6 * static_cast<double>(data.size()));
  EXPECT_EQ(huffman_decode(enc), data);
}

TEST(Huffman, RandomRoundTrips) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 2000;
    const std::size_t alphabet = 1 + rng() % 256;
    std::vector<std::uint8_t> data(n);
    // geometric-ish skew so code lengths vary
    std::geometric_distribution<int> g(0.05 + 0.9 * static_cast<double>(rng() % 100) / 100.0);
    for (auto& b : data) b = static_cast<std::uint8_t>(static_cast<std::size_t>(g(rng)) % alphabet);
    const auto enc = huffman_encode(data);
    ASSERT_EQ(huffman_decode(enc), data);
    EXPECT_EQ(enc, huffman_encode(data));
    EXPECT_EQ(enc.bits.size(), (enc.bit_count + 7) / 8);
  }
}

TEST(Huffman, CodeIsCompleteAndPrefixFree) {
  std::vector<std::uint8_t> data;
  for (int s = 0; s < 12; ++s) data.insert(data.end(), static_cast<std::size_t>(1) << (s % 8), static_cast<std::uint8_t>(s));
  const auto enc = huffman_encode(data);
  double kraft = 0.0;
  for (auto [sym, len] : enc.table) kraft += std::ldexp(1.0, -len);
  EXPECT_DOUBLE_EQ(kraft, 1.0);
}

TEST(Huffman, EmptyInput) {
  const auto enc = huffman_encode(std::vector<std::uint8_t>{});
  EXPECT_TRUE(huffman_decode(enc).empty());
}

TEST(Huffman, CorruptStreams) {
  const std::vector<std::uint8_t> data{1, 2, 2, 3, 3, 3, 3};
  const auto good = huffman_encode(data);
  auto expect_corrupt = [](const HuffmanEncoded& e) {
    try {
      huffman_decode(e);
      FAIL();
    } catch (const Error& err) {
      EXPECT_EQ(err.code(), ErrorCode::CorruptStream);
    }
  };
  auto truncated = good;
  truncated.bit_count -= 1;
  expect_corrupt(truncated);
  auto extra = good;
  extra.symbol_count -= 1;
  expect_corrupt(extra);
  auto bad_table = good;
  bad_table.table[0].second = 1;
  bad_table.table[1].second = 1;
  expect_corrupt(bad_table);
  auto short_bits = good;
  short_bits.bits.clear();
  expect_corrupt(short_bits);
}
