#include "nbtree/bloom.hpp"

#include <cstring>

#include "nbtree/dtree.hpp"

namespace nbtree {

namespace {

inline uint64_t rotl64(uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline uint64_t fmix64(uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

inline uint64_t load_u64(const char* p) {
  uint64_t v;
  std::memcpy(&v, p, 8);
  return v;
}

}  // namespace

// MurmurHash3 x64/128 over the key bytes. Chosen for determinism and good
// avalanche; one evaluation serves all probes via double hashing.
Hash128 hash128(std::string_view data) {
  const char* p = data.data();
  const size_t len = data.size();
  const size_t nblocks = len / 16;

  uint64_t h1 = 0x9368e53c2f6af274ULL;
  uint64_t h2 = 0x586dcd208f7cd3fdULL;
  const uint64_t c1 = 0x87c37b91114253d5ULL;
  const uint64_t c2 = 0x4cf5ad432745937fULL;

  for (size_t i = 0; i < nblocks; ++i) {
    uint64_t k1 = load_u64(p + i * 16);
    uint64_t k2 = load_u64(p + i * 16 + 8);
    k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
    h1 = rotl64(h1, 27); h1 += h2; h1 = h1 * 5 + 0x52dce729;
    k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2;
    h2 = rotl64(h2, 31); h2 += h1; h2 = h2 * 5 + 0x38495ab5;
  }

  const uint8_t* tail = reinterpret_cast<const uint8_t*>(p + nblocks * 16);
  uint64_t k1 = 0, k2 = 0;
  switch (len & 15) {
    case 15: k2 ^= uint64_t(tail[14]) << 48; [[fallthrough]];
    case 14: k2 ^= uint64_t(tail[13]) << 40; [[fallthrough]];
    case 13: k2 ^= uint64_t(tail[12]) << 32; [[fallthrough]];
    case 12: k2 ^= uint64_t(tail[11]) << 24; [[fallthrough]];
    case 11: k2 ^= uint64_t(tail[10]) << 16; [[fallthrough]];
    case 10: k2 ^= uint64_t(tail[9]) << 8; [[fallthrough]];
    case 9:  k2 ^= uint64_t(tail[8]);
             k2 *= c2; k2 = rotl64(k2, 33); k2 *= c1; h2 ^= k2; [[fallthrough]];
    case 8:  k1 ^= uint64_t(tail[7]) << 56; [[fallthrough]];
    case 7:  k1 ^= uint64_t(tail[6]) << 48; [[fallthrough]];
    case 6:  k1 ^= uint64_t(tail[5]) << 40; [[fallthrough]];
    case 5:  k1 ^= uint64_t(tail[4]) << 32; [[fallthrough]];
    case 4:  k1 ^= uint64_t(tail[3]) << 24; [[fallthrough]];
    case 3:  k1 ^= uint64_t(tail[2]) << 16; [[fallthrough]];
    case 2:  k1 ^= uint64_t(tail[1]) << 8; [[fallthrough]];
    case 1:  k1 ^= uint64_t(tail[0]);
             k1 *= c1; k1 = rotl64(k1, 31); k1 *= c2; h1 ^= k1;
  }

  h1 ^= len; h2 ^= len;
  h1 += h2; h2 += h1;
  h1 = fmix64(h1); h2 = fmix64(h2);
  h1 += h2; h2 += h1;
  return {h1, h2};
}

BloomFilter BloomFilter::build(const std::vector<Hash128>& key_hashes, uint32_t bits_per_key,
                               uint32_t hashes) {
  BloomFilter bf;
  bf.n_ = key_hashes.size();
  bf.h_ = hashes;
  bf.m_ = bf.n_ * static_cast<uint64_t>(bits_per_key);
  if (bf.m_ < 8) bf.m_ = 8;
  bf.bits_.assign((bf.m_ + 7) / 8, 0);
  for (const Hash128& h : key_hashes) bf.insert_hash(h);
  return bf;
}

void BloomFilter::insert_hash(const Hash128& h) {
  uint64_t step = h.h2 | 1;  // odd step so probes spread over the array
  for (uint32_t i = 0; i < h_; ++i) {
    uint64_t bit = (h.h1 + i * step) % m_;
    bits_[bit >> 3] |= static_cast<uint8_t>(1u << (bit & 7));
  }
}

bool BloomFilter::may_contain(const Key& key) const { return may_contain_hash(hash128(key)); }

bool BloomFilter::may_contain_hash(const Hash128& h) const {
  if (m_ == 0 || n_ == 0) return false;
  uint64_t step = h.h2 | 1;
  for (uint32_t i = 0; i < h_; ++i) {
    uint64_t bit = (h.h1 + i * step) % m_;
    if (!(bits_[bit >> 3] & (1u << (bit & 7)))) return false;
  }
  return true;
}

std::string BloomFilter::serialize() const {
  std::string out;
  out.reserve(20 + bits_.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((h_ >> (8 * i)) & 0xff));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((m_ >> (8 * i)) & 0xff));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n_ >> (8 * i)) & 0xff));
  out.append(reinterpret_cast<const char*>(bits_.data()), bits_.size());
  return out;
}

BloomFilter BloomFilter::deserialize(std::string_view bytes) {
  if (bytes.size() < 20) throw CodecError("bloom blob too short");
  BloomFilter bf;
  for (int i = 3; i >= 0; --i) bf.h_ = (bf.h_ << 8) | static_cast<uint8_t>(bytes[i]);
  for (int i = 7; i >= 0; --i) bf.m_ = (bf.m_ << 8) | static_cast<uint8_t>(bytes[4 + i]);
  for (int i = 7; i >= 0; --i) bf.n_ = (bf.n_ << 8) | static_cast<uint8_t>(bytes[12 + i]);
  size_t nbytes = (bf.m_ + 7) / 8;
  if (bytes.size() != 20 + nbytes) throw CodecError("bloom blob length mismatch");
  bf.bits_.assign(bytes.begin() + 20, bytes.end());
  return bf;
}

BloomFilter build_filter(SortedStream& stream, uint32_t bits_per_key, uint32_t hashes) {
  if (bits_per_key < 1 || hashes < 1)
    throw std::invalid_argument("build_filter: bits_per_key and hashes must be >= 1");
  std::vector<Hash128> hs;
  while (auto rec = stream.next()) hs.push_back(hash128(rec->key));
  return BloomFilter::build(hs, bits_per_key, hashes);
}

}  // namespace nbtree
