#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nbtree/core.hpp"

namespace nbtree {

class SortedStream;

// 128-bit key hash; the two halves drive double hashing.
struct Hash128 {
  uint64_t h1 = 0;
  uint64_t h2 = 0;
};

Hash128 hash128(std::string_view data);

// Per-d-tree filter, built once at d-tree build time and immutable after.
// Probe i hits bit (h1 + i*h2) mod m; no false negatives by construction.
class BloomFilter {
 public:
  BloomFilter() = default;

  static BloomFilter build(const std::vector<Hash128>& key_hashes, uint32_t bits_per_key,
                           uint32_t hashes);

  void insert_hash(const Hash128& h);
  bool may_contain(const Key& key) const;
  bool may_contain_hash(const Hash128& h) const;

  uint64_t bit_count() const { return m_; }
  uint64_t key_count() const { return n_; }
  uint32_t probe_count() const { return h_; }

  // 4-byte h || 8-byte m || 8-byte n || bit array
  std::string serialize() const;
  static BloomFilter deserialize(std::string_view bytes);

  bool operator==(const BloomFilter&) const = default;

 private:
  uint64_t m_ = 0;  // bits
  uint64_t n_ = 0;  // keys at build time
  uint32_t h_ = 0;  // probes
  std::vector<uint8_t> bits_;
};

// Builds a filter over every key in the stream (k bits per key, h probes).
BloomFilter build_filter(SortedStream& stream, uint32_t bits_per_key, uint32_t hashes);

}  // namespace nbtree
