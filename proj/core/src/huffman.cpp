#include <algorithm>
#include <array>
#include <queue>

#include "tinyann/compression.hpp"
#include "tinyann/error.hpp"

namespace tinyann {

namespace {

constexpr std::size_t kMaxCodeLength = 57;

struct Node {
  std::uint64_t weight;
  std::uint32_t order;  // tie-break: creation order, leaves first by symbol
  int left = -1;
  int right = -1;
  int symbol = -1;
};

struct Canonical {
  std::array<std::uint64_t, 256> code{};
  std::array<std::uint8_t, 256> length{};
};

Canonical assign_codes(const std::vector<std::pair<std::uint8_t, std::uint8_t>>& table) {
  Canonical c;
  auto sorted = table;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  std::uint64_t code = 0;
  std::uint8_t len = sorted.empty() ? 0 : sorted.front().second;
  for (const auto& [symbol, length] : sorted) {
    code <<= (length - len);
    len = length;
    c.code[symbol] = code;
    c.length[symbol] = length;
    ++code;
  }
  return c;
}

void check_table(const HuffmanEncoded& e) {
  if (e.table.empty()) {
    if (e.symbol_count != 0 || e.bit_count != 0) throw Error(ErrorCode::CorruptStream, "symbols without a code table");
    return;
  }
  std::array<bool, 256> seen{};
  // Kraft sum over 2^-len, scaled by 2^kMaxCodeLength.
  std::uint64_t kraft = 0;
  for (const auto& [symbol, length] : e.table) {
    if (length == 0 || length > kMaxCodeLength || seen[symbol]) {
      throw Error(ErrorCode::CorruptStream, "invalid Huffman code table");
    }
    seen[symbol] = true;
    kraft += std::uint64_t{1} << (kMaxCodeLength - length);
  }
  if (kraft > (std::uint64_t{1} << kMaxCodeLength)) {
    throw Error(ErrorCode::CorruptStream, "Huffman code lengths are not prefix-free");
  }
}

}  // namespace

std::size_t HuffmanEncoded::stored_size() const noexcept {
  return 2 + 2 * table.size() + 4 + 4 + bits.size();
}

HuffmanEncoded huffman_encode(std::span<const std::uint8_t> data) {
  HuffmanEncoded out;
  out.symbol_count = data.size();
  if (data.empty()) return out;

  std::array<std::uint64_t, 256> freq{};
  for (auto b : data) ++freq[b];

  std::vector<Node> nodes;
  for (int s = 0; s < 256; ++s) {
    if (freq[s]) nodes.push_back({freq[s], static_cast<std::uint32_t>(nodes.size()), -1, -1, s});
  }

  std::array<std::uint8_t, 256> lengths{};
  if (nodes.size() == 1) {
    lengths[nodes.front().symbol] = 1;
  } else {
    auto greater = [&](int a, int b) {
      if (nodes[a].weight != nodes[b].weight) return nodes[a].weight > nodes[b].weight;
      return nodes[a].order > nodes[b].order;
    };
    std::priority_queue<int, std::vector<int>, decltype(greater)> heap(greater);
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) heap.push(i);
    while (heap.size() > 1) {
      const int a = heap.top();
      heap.pop();
      const int b = heap.top();
      heap.pop();
      nodes.push_back({nodes[a].weight + nodes[b].weight, static_cast<std::uint32_t>(nodes.size()), a, b, -1});
      heap.push(static_cast<int>(nodes.size()) - 1);
    }
    std::vector<std::pair<int, std::uint8_t>> stack{{heap.top(), 0}};
    while (!stack.empty()) {
      const auto [n, depth] = stack.back();
      stack.pop_back();
      if (nodes[n].symbol >= 0) {
        lengths[nodes[n].symbol] = depth;
      } else {
        stack.push_back({nodes[n].left, static_cast<std::uint8_t>(depth + 1)});
        stack.push_back({nodes[n].right, static_cast<std::uint8_t>(depth + 1)});
      }
    }
  }
  for (int s = 0; s < 256; ++s) {
    if (lengths[s]) {
      if (lengths[s] > kMaxCodeLength) throw Error(ErrorCode::InvalidArgument, "Huffman code too long");
      out.table.emplace_back(static_cast<std::uint8_t>(s), lengths[s]);
    }
  }

  const Canonical codes = assign_codes(out.table);
  for (auto b : data) {
    const auto len = codes.length[b];
    const auto code = codes.code[b];
    for (int i = len - 1; i >= 0; --i, ++out.bit_count) {
      if (out.bit_count % 8 == 0) out.bits.push_back(0);
      if ((code >> i) & 1u) out.bits.back() |= static_cast<std::uint8_t>(0x80u >> (out.bit_count % 8));
    }
  }
  return out;
}

std::vector<std::uint8_t> huffman_decode(const HuffmanEncoded& encoded) {
  check_table(encoded);
  if (encoded.bit_count > encoded.bits.size() * 8) {
    throw Error(ErrorCode::CorruptStream, "Huffman bitstream shorter than its bit count");
  }
  std::vector<std::uint8_t> out;
  if (encoded.symbol_count == 0) {
    if (encoded.bit_count != 0) throw Error(ErrorCode::CorruptStream, "trailing Huffman bits");
    return out;
  }

  // Canonical decoding tables: first code and first symbol slot per length.
  auto sorted = encoded.table;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  std::array<std::uint64_t, kMaxCodeLength + 2> count{};
  for (const auto& [symbol, length] : sorted) ++count[length];
  std::array<std::uint64_t, kMaxCodeLength + 2> first_code{};
  std::array<std::uint64_t, kMaxCodeLength + 2> first_slot{};
  std::uint64_t code = 0;
  std::uint64_t slot = 0;
  for (std::size_t len = 1; len <= kMaxCodeLength; ++len) {
    code = (code + count[len - 1]) << 1;
    first_code[len] = code;
    first_slot[len] = slot;
    slot += count[len];
  }

  out.reserve(encoded.symbol_count);
  std::uint64_t pos = 0;
  while (out.size() < encoded.symbol_count) {
    std::uint64_t value = 0;
    std::size_t len = 0;
    for (;;) {
      if (pos >= encoded.bit_count) throw Error(ErrorCode::CorruptStream, "Huffman bitstream ends mid-code");
      value = (value << 1) | ((encoded.bits[pos / 8] >> (7 - pos % 8)) & 1u);
      ++pos;
      ++len;
      if (len > kMaxCodeLength) throw Error(ErrorCode::CorruptStream, "no Huffman code matches the bitstream");
      if (value >= first_code[len] && value - first_code[len] < count[len]) {
        out.push_back(sorted[first_slot[len] + (value - first_code[len])].first);
        break;
      }
    }
  }
  if (pos != encoded.bit_count) throw Error(ErrorCode::CorruptStream, "trailing Huffman bits");
  return out;
}

}  // namespace tinyann
