#include <doctest.h>

#include <random>
#include <set>

#include "nbtree/bloom.hpp"
#include "nbtree/dtree.hpp"

using namespace nbtree;

namespace {

std::vector<DeltaRecord> records_for(const std::vector<uint64_t>& keys) {
  std::vector<DeltaRecord> out;
  uint64_t seq = 1;
  for (uint64_t k : keys) out.push_back({key_from_u64(k), Op::Put, Value(8, 'v'), seq++});
  return out;
}

}  // namespace

TEST_CASE("built filter answers true for every inserted key") {
  VectorStream s(records_for({1, 2, 8}));
  BloomFilter bf = build_filter(s, 8, 3);
  CHECK(bf.may_contain(key_from_u64(1)));
  CHECK(bf.may_contain(key_from_u64(2)));
  CHECK(bf.may_contain(key_from_u64(8)));
}

TEST_CASE("empty filter answers false") {
  VectorStream s({});
  BloomFilter bf = build_filter(s, 8, 3);
  CHECK(!bf.may_contain(key_from_u64(1)));
  CHECK(!bf.may_contain(key_from_u64(12345)));
}

TEST_CASE("no false negatives on random build sets") {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 20; ++round) {
    std::set<uint64_t> keys;
    size_t n = 1 + rng() % 400;
    while (keys.size() < n) keys.insert(rng());
    VectorStream s(records_for({keys.begin(), keys.end()}));
    BloomFilter bf = build_filter(s, 8, 3);
    for (uint64_t k : keys) CHECK(bf.may_contain(key_from_u64(k)));
  }
}

TEST_CASE("false-positive rate for k=8 h=3 sits in the expected band") {
  std::mt19937_64 rng(23);
  std::set<uint64_t> present;
  while (present.size() < 100000) present.insert(rng());
  VectorStream s(records_for({present.begin(), present.end()}));
  BloomFilter bf = build_filter(s, 8, 3);

  uint64_t probes = 0, hits = 0;
  while (probes < 100000) {
    uint64_t k = rng();
    if (present.count(k)) continue;
    ++probes;
    if (bf.may_contain(key_from_u64(k))) ++hits;
  }
  double fp = static_cast<double>(hits) / static_cast<double>(probes);
  // analytic (1 - e^{-h/k})^h is about 3.1%
  CHECK(fp >= 0.005);
  CHECK(fp < 0.05);
}

TEST_CASE("identical build streams produce bit-identical filters") {
  auto recs = records_for({5, 9, 100, 4096, 1ull << 40});
  VectorStream a(recs), b(recs);
  BloomFilter x = build_filter(a, 8, 3);
  BloomFilter y = build_filter(b, 8, 3);
  CHECK(x.serialize() == y.serialize());
  CHECK(x == y);
}

TEST_CASE("serialization round trip") {
  VectorStream s(records_for({3, 1417, 99}));
  BloomFilter bf = build_filter(s, 8, 3);
  std::string blob = bf.serialize();
  BloomFilter back = BloomFilter::deserialize(blob);
  CHECK(back == bf);
  CHECK_THROWS_AS(BloomFilter::deserialize(blob.substr(0, 10)), CodecError);
}
